#include <doctest.h>

#include "peerbft/replica.hpp"
#include "peerbft/app/kvstore.hpp"
#include "testutil.hpp"

using namespace peerbft;

namespace {

ReplicaConfig makeCfg(ReplicaId id, std::uint32_t n = 4, std::uint32_t f = 1) {
    ReplicaConfig cfg;
    cfg.id = id;
    cfg.replicaCount = n;
    cfg.maxFaulty = f;
    cfg.delta = 200'000;
    cfg.cpInterval = 50;
    cfg.expansionLimit = 5;
    return cfg;
}

std::unique_ptr<Replica> makeReplica(ReplicaId id) {
    return std::make_unique<Replica>(makeCfg(id), testutil::ringFor(SignerId::replica(id)),
                                     std::make_unique<KvStore>());
}

ProtocolMessage clientSubmit(ClientId client, Timestamp ts, const std::string& key,
                             const std::string& value) {
    return ClientSubmit{testutil::signedKvWrite(client, ts, key, value)};
}

}  // namespace

TEST_CASE("bootstrap validates the group arithmetic") {
    CHECK_NOTHROW((void)makeReplica(0));  // N=4, f=1
    CHECK_THROWS(Replica(makeCfg(0, 4, 2), testutil::ringFor(SignerId::replica(0)),
                         std::make_unique<KvStore>()));  // N < 3f+1
    CHECK_NOTHROW(Replica(makeCfg(0, 7, 2), testutil::ringFor(SignerId::replica(0)),
                          std::make_unique<KvStore>()));
}

TEST_CASE("a client request at the coordinator triggers DepPropose broadcasts") {
    auto rp = makeReplica(0);
    Replica& r = *rp;
    StepOutput out = r.step(Replica::Event{clientSubmit(1, 1, "k", "v")});
    int dps = 0;
    for (const auto& ob : out.messages)
        if (std::holds_alternative<DepPropose>(ob.message)) ++dps;
    CHECK(dps == 2);  // checkpoint slot 0 plus the request
    CHECK(out.timers.size() >= 2);
}

TEST_CASE("messages with invalid signatures are discarded before any state change") {
    auto rp = makeReplica(0);
    Replica& r = *rp;
    Request req = testutil::signedKvWrite(1, 1, "k", "v");
    req.signature[0] ^= 0xff;
    StepOutput out = r.step(Replica::Event{ProtocolMessage{ClientSubmit{req}}});
    CHECK(out.messages.empty());
    CHECK(r.stats().invalidSignatures == 1);

    // A DepPropose signed by replica 2 but claiming to come from replica 1.
    DepPropose dp;
    dp.slot = SlotId{1, 0};
    dp.coordinator = 1;
    dp.requestHash = Request::checkpointRequest().hash();
    dp.fastQuorum = {0, 2};
    signMessage(testutil::ringFor(SignerId::replica(2)), dp);
    StepOutput out2 = r.step(Replica::Event{ProtocolMessage{dp}});
    CHECK(out2.messages.empty());
    CHECK(r.stats().invalidSignatures == 2);
}

TEST_CASE("duplicate client submissions do not propose twice") {
    auto rp = makeReplica(0);
    Replica& r = *rp;
    r.step(Replica::Event{clientSubmit(1, 1, "k", "v")});
    std::uint64_t counterAfterFirst = r.agreement().nextOwnCounter();
    r.step(Replica::Event{clientSubmit(1, 1, "k", "v")});
    CHECK(r.agreement().nextOwnCounter() == counterAfterFirst);
}

TEST_CASE("replay of an identical event sequence is bit-identical") {
    // Determinism harness: run the same mixed event sequence twice and
    // compare every output byte by byte.
    auto runOnce = [] {
        auto rp = makeReplica(0);
    Replica& r = *rp;
        std::vector<Bytes> wire;
        std::vector<std::pair<std::uint64_t, Micros>> timers;
        std::vector<Replica::Event> events;
        events.push_back(Replica::Event{clientSubmit(1, 1, "a", "1")});
        events.push_back(Replica::Event{clientSubmit(2, 1, "b", "2")});

        // A full fast path for a remote slot, driven by signed messages.
        Keyring r1 = testutil::ringFor(SignerId::replica(1));
        DepPropose dp;
        dp.slot = SlotId{1, 0};
        dp.coordinator = 1;
        dp.requestHash = Request::checkpointRequest().hash();
        dp.fastQuorum = {0, 2};
        signMessage(r1, dp);
        events.push_back(Replica::Event{ProtocolMessage{dp}});
        events.push_back(Replica::Event{clientSubmit(1, 2, "a", "3")});

        std::vector<std::uint64_t> firedTokens;
        for (const auto& ev : events) {
            StepOutput out = r.step(ev);
            for (const auto& ob : out.messages) wire.push_back(encodeMessage(ob.message));
            for (const auto& t : out.timers) timers.push_back({t.token, t.delay});
        }
        // Fire every armed timer once, in order.
        for (auto [token, delay] : timers) {
            StepOutput out = r.step(Replica::Event{Replica::TimerEvent{token}});
            for (const auto& ob : out.messages) wire.push_back(encodeMessage(ob.message));
            firedTokens.push_back(token);
        }
        return wire;
    };

    auto a = runOnce();
    auto b = runOnce();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("events for garbage-collected slots are dropped silently") {
    auto rp = makeReplica(0);
    Replica& r = *rp;
    // Force a stable barrier through the engine by feeding checkpoint votes
    // is exercised elsewhere; here a Reply (client-only message) must simply
    // be ignored by the replica.
    Reply reply;
    reply.slot = SlotId{1, 0};
    reply.sender_ = 1;
    reply.client = 9;
    reply.clientTimestamp = 1;
    reply.result = {1};
    signMessage(testutil::ringFor(SignerId::replica(1)), reply);
    StepOutput out = r.step(Replica::Event{ProtocolMessage{reply}});
    CHECK(out.messages.empty());
    CHECK(out.events.empty());
}

TEST_CASE("batching accumulates requests and proposes a container") {
    ReplicaConfig cfg = makeCfg(0);
    cfg.batchLimit = 3;
    Replica r(cfg, testutil::ringFor(SignerId::replica(0)), std::make_unique<KvStore>());

    StepOutput o1 = r.step(Replica::Event{clientSubmit(1, 1, "a", "1")});
    int dps = 0;
    for (const auto& ob : o1.messages)
        if (std::holds_alternative<DepPropose>(ob.message)) ++dps;
    CHECK(dps == 0);  // queued, flush timer armed
    REQUIRE(o1.timers.size() == 1);

    StepOutput o2 = r.step(Replica::Event{clientSubmit(2, 1, "b", "2")});
    CHECK(o2.messages.empty());
    StepOutput o3 = r.step(Replica::Event{clientSubmit(3, 1, "c", "3")});
    // Third request reaches the batch limit: flush proposes cp slot + batch.
    std::vector<DepPropose> proposed;
    for (const auto& ob : o3.messages)
        if (auto* dp = std::get_if<DepPropose>(&ob.message)) proposed.push_back(*dp);
    REQUIRE(proposed.size() == 2);
    REQUIRE(proposed[1].request.has_value());
    CHECK(proposed[1].request->isBatch());
    CHECK(proposed[1].request->members.size() == 3);

    // The flush timer later fires on an empty queue: nothing happens.
    StepOutput o4 = r.step(Replica::Event{Replica::TimerEvent{o1.timers[0].token}});
    CHECK(o4.messages.empty());
}
