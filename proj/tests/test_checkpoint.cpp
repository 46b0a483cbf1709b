#include <doctest.h>

#include "peerbft/app/kvstore.hpp"
#include "peerbft/checkpoint.hpp"
#include "testutil.hpp"

using namespace peerbft;

namespace {

ReplicaConfig makeCfg(ReplicaId id) {
    ReplicaConfig cfg;
    cfg.id = id;
    cfg.replicaCount = 4;
    cfg.maxFaulty = 1;
    cfg.cpInterval = 50;
    cfg.expansionLimit = 5;
    return cfg;
}

CheckpointMsg voteFrom(ReplicaId sender, std::uint64_t seq, const DependencySet& barrier,
                       const Digest& stateHash) {
    CheckpointMsg v;
    v.seq = seq;
    v.sender_ = sender;
    v.barrier = barrier;
    v.stateHash = stateHash;
    signMessage(testutil::ringFor(SignerId::replica(sender)), v);
    return v;
}

}  // namespace

TEST_CASE("checkpoint sequence increments and stability fires at 2f+1 votes") {
    ReplicaConfig cfg = makeCfg(0);
    Keyring ring = testutil::ringFor(SignerId::replica(0));
    CheckpointManager mgr(cfg, ring);
    KvStore app;
    app.execute(testutil::signedKvWrite(1, 1, "k", "v"));

    CheckpointPoint point{{SlotId{0, 0}}, DependencySet::of({SlotId{0, 0}})};
    EngineOutput out;
    auto outcome = mgr.takeCheckpoint(point, app, out);
    CHECK(mgr.localSeq() == 1);
    CHECK(!outcome.stable.has_value());  // one vote only
    REQUIRE_EQ(out.messages.size(), 1);

    Digest h = app.stateDigest();
    EngineOutput o2;
    auto r1 = mgr.onCheckpointMsg(voteFrom(1, 1, point.barrier, h), o2);
    CHECK(!r1.stable.has_value());
    auto r2 = mgr.onCheckpointMsg(voteFrom(2, 1, point.barrier, h), o2);
    REQUIRE(r2.stable.has_value());
    CHECK(r2.stable->second == 1);
    CHECK(r2.stable->first.covers(SlotId{0, 0}));
    CHECK(mgr.stableSeq() == 1);
}

TEST_CASE("a divergent vote is isolated; stability still reached with correct votes") {
    ReplicaConfig cfg = makeCfg(0);
    Keyring ring = testutil::ringFor(SignerId::replica(0));
    CheckpointManager mgr(cfg, ring);
    KvStore app;

    CheckpointPoint point{{SlotId{0, 0}}, DependencySet::of({SlotId{0, 0}})};
    EngineOutput out;
    mgr.takeCheckpoint(point, app, out);
    Digest h = app.stateDigest();

    Digest bad = digestOf(toBytes("tampered"));
    EngineOutput o2;
    CHECK(!mgr.onCheckpointMsg(voteFrom(3, 1, point.barrier, bad), o2).stable.has_value());
    CHECK(!mgr.onCheckpointMsg(voteFrom(1, 1, point.barrier, h), o2).stable.has_value());
    auto r = mgr.onCheckpointMsg(voteFrom(2, 1, point.barrier, h), o2);
    CHECK(r.stable.has_value());
}

TEST_CASE("a second vote from the same sender does not count") {
    ReplicaConfig cfg = makeCfg(0);
    Keyring ring = testutil::ringFor(SignerId::replica(0));
    CheckpointManager mgr(cfg, ring);
    KvStore app;
    CheckpointPoint point{{SlotId{0, 0}}, DependencySet::of({SlotId{0, 0}})};
    EngineOutput out;
    mgr.takeCheckpoint(point, app, out);
    Digest h = app.stateDigest();

    EngineOutput o2;
    CHECK(!mgr.onCheckpointMsg(voteFrom(1, 1, point.barrier, h), o2).stable.has_value());
    CHECK(!mgr.onCheckpointMsg(voteFrom(1, 1, point.barrier, h), o2).stable.has_value());
}

TEST_CASE("external stability marks the replica behind and fetch restores state") {
    ReplicaConfig cfg3 = makeCfg(3);
    Keyring ring3 = testutil::ringFor(SignerId::replica(3));
    CheckpointManager lagging(cfg3, ring3);
    KvStore emptyApp;

    KvStore peerApp;
    peerApp.execute(testutil::signedKvWrite(1, 1, "k", "v1"));
    peerApp.execute(testutil::signedKvWrite(2, 1, "q", "v2"));
    Bytes snapshot = peerApp.snapshot();
    Digest h = digestOf(snapshot);
    DependencySet barrier = DependencySet::of({SlotId{0, 1}, SlotId{1, 0}});

    EngineOutput out;
    CHECK(!lagging.onCheckpointMsg(voteFrom(0, 1, barrier, h), out).externalStable.has_value());
    CHECK(!lagging.onCheckpointMsg(voteFrom(1, 1, barrier, h), out).externalStable.has_value());
    auto r = lagging.onCheckpointMsg(voteFrom(2, 1, barrier, h), out);
    REQUIRE(r.externalStable.has_value());
    CHECK(*r.externalStable == 1);
    CHECK(lagging.behind());

    CheckpointFetchResp resp;
    resp.sender_ = 0;
    resp.seq = 1;
    resp.votes = {voteFrom(0, 1, barrier, h), voteFrom(1, 1, barrier, h),
                  voteFrom(2, 1, barrier, h)};
    resp.snapshot = snapshot;
    signMessage(testutil::ringFor(SignerId::replica(0)), resp);

    SUBCASE("tampered snapshot bytes are rejected") {
        CheckpointFetchResp bad = resp;
        bad.snapshot.push_back(0x42);
        CHECK(!lagging.onFetchResp(bad, emptyApp).has_value());
        CHECK(lagging.behind());
    }

    SUBCASE("insufficient votes are rejected") {
        CheckpointFetchResp bad = resp;
        bad.votes.pop_back();
        CHECK(!lagging.onFetchResp(bad, emptyApp).has_value());
    }

    SUBCASE("a valid response replaces the application state") {
        auto restored = lagging.onFetchResp(resp, emptyApp);
        REQUIRE(restored.has_value());
        CHECK(restored->covers(SlotId{0, 1}));
        CHECK(emptyApp.stateDigest() == peerApp.stateDigest());
        CHECK(!lagging.behind());
        CHECK(lagging.localSeq() == 1);
        // The duplicate-filter table travels with the snapshot.
        CHECK(!emptyApp.execute(testutil::signedKvWrite(1, 1, "k", "replay")).has_value());
    }
}

TEST_CASE("a stable replica serves fetch requests with votes and snapshot") {
    ReplicaConfig cfg = makeCfg(0);
    Keyring ring = testutil::ringFor(SignerId::replica(0));
    CheckpointManager mgr(cfg, ring);
    KvStore app;
    app.execute(testutil::signedKvWrite(1, 1, "k", "v"));

    CheckpointPoint point{{SlotId{0, 0}}, DependencySet::of({SlotId{0, 0}})};
    EngineOutput out;
    mgr.takeCheckpoint(point, app, out);
    Digest h = app.stateDigest();
    EngineOutput o2;
    mgr.onCheckpointMsg(voteFrom(1, 1, point.barrier, h), o2);
    mgr.onCheckpointMsg(voteFrom(2, 1, point.barrier, h), o2);
    REQUIRE(mgr.stableSeq() == 1);

    CheckpointFetchReq req;
    req.sinceSeq = 0;
    req.sender_ = 3;
    signMessage(testutil::ringFor(SignerId::replica(3)), req);
    EngineOutput o3;
    mgr.onFetchReq(req, o3);
    REQUIRE(o3.messages.size() == 1);
    const auto* resp = std::get_if<CheckpointFetchResp>(&o3.messages[0].message);
    REQUIRE(resp != nullptr);
    CHECK(resp->seq == 1);
    CHECK(resp->votes.size() == 3);
    CHECK(digestOf(resp->snapshot) == h);

    CheckpointFetchReq uptodate = req;
    uptodate.sinceSeq = 1;
    signMessage(testutil::ringFor(SignerId::replica(3)), uptodate);
    EngineOutput o4;
    mgr.onFetchReq(uptodate, o4);
    CHECK(o4.messages.empty());
}
