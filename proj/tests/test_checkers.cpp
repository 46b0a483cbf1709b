#include <doctest.h>

#include "peerbft/sim/checkers.hpp"
#include "testutil.hpp"

using namespace peerbft;
using namespace peerbft::sim;

namespace {

ClientOp acceptedWrite(Timestamp ts, const std::string& key, const std::string& value,
                       Micros submit, Micros accept) {
    ClientOp op;
    op.timestamp = ts;
    op.operation = KvOperation::write(toBytes(key), toBytes(value));
    op.submitTime = submit;
    op.acceptTime = accept;
    op.result = KvResult::writeAck();
    op.accepted = true;
    return op;
}

ClientOp acceptedRead(Timestamp ts, const std::string& key, const Bytes& result, Micros submit,
                      Micros accept) {
    ClientOp op;
    op.timestamp = ts;
    op.operation = KvOperation::read(toBytes(key));
    op.submitTime = submit;
    op.acceptTime = accept;
    op.result = result;
    op.accepted = true;
    return op;
}

}  // namespace

TEST_CASE("linearizability: sequential write then read must observe the value") {
    SimResult r;
    ClientResult c1{1, 0, {acceptedWrite(1, "k", "v", 100, 200)}};
    ClientResult c2{2, 1, {acceptedRead(1, "k", KvResult::value(toBytes("v")), 300, 400)}};
    r.clients = {c1, c2};
    CHECK(linearizabilityCheck(r).pass);
}

TEST_CASE("linearizability: a stale read fails the check") {
    SimResult r;
    ClientResult c1{1, 0,
                    {acceptedWrite(1, "k", "v1", 100, 200), acceptedWrite(2, "k", "v2", 250, 350)}};
    // Read submitted after v2 accepted but returning v1: stale.
    ClientResult c2{2, 1, {acceptedRead(1, "k", KvResult::value(toBytes("v1")), 400, 500)}};
    r.clients = {c1, c2};
    CheckReport rep = linearizabilityCheck(r);
    CHECK(!rep.pass);
    REQUIRE(!rep.failures.empty());
}

TEST_CASE("linearizability: concurrent write values are acceptable") {
    SimResult r;
    ClientResult c1{1, 0, {acceptedWrite(1, "k", "v1", 100, 200)}};
    // Write v2 overlaps the read interval.
    ClientResult c2{2, 1, {acceptedWrite(1, "k", "v2", 380, 520)}};
    ClientResult c3{3, 2, {acceptedRead(1, "k", KvResult::value(toBytes("v2")), 400, 500)}};
    r.clients = {c1, c2, c3};
    CHECK(linearizabilityCheck(r).pass);
}

TEST_CASE("linearizability: absent is valid only before any write") {
    SimResult r;
    ClientResult c1{1, 0, {acceptedRead(1, "k", KvResult::absent(), 50, 80)}};
    ClientResult c2{2, 1, {acceptedWrite(1, "k", "v", 100, 200)}};
    ClientResult c3{3, 2, {acceptedRead(1, "k", KvResult::absent(), 300, 400)}};
    r.clients = {c1, c2};
    CHECK(linearizabilityCheck(r).pass);
    r.clients = {c1, c2, c3};
    CHECK(!linearizabilityCheck(r).pass);
}

TEST_CASE("dependency linkage flags unlinked conflicting commits") {
    SimResult r;
    ReplicaResult rep;
    rep.id = 0;
    rep.correct = true;
    Request w1 = testutil::signedKvWrite(1, 1, "k", "a");
    Request w2 = testutil::signedKvWrite(2, 1, "k", "b");
    rep.commitLog[SlotId{0, 1}] = CommitRecord{{0, 1}, w1, {}};
    rep.commitLog[SlotId{1, 1}] = CommitRecord{{1, 1}, w2, {}};  // no link
    r.replicas.push_back(rep);
    CHECK(!dependencyLinkageCheck(r).pass);

    // With a dependency either way the pair is fine.
    r.replicas[0].commitLog[SlotId{1, 1}].deps.add(SlotId{0, 1});
    CHECK(dependencyLinkageCheck(r).pass);

    // Implicit coverage through a later slot of the same coordinator counts.
    r.replicas[0].commitLog[SlotId{1, 1}].deps = DependencySet::of({SlotId{0, 5}});
    CHECK(dependencyLinkageCheck(r).pass);
}

#include "peerbft/sim/oracle.hpp"

TEST_CASE("bounded oracle: small exploration is violation-free and sees both orders") {
    OracleConfig cfg;
    cfg.branchBound = 3;
    cfg.requests = 2;
    OracleReport r = exploreInterleavings(cfg);
    CHECK(r.pass());
    CHECK(r.schedulesExplored > 1);
    CHECK(r.executionOrders.size() == 2);  // each order appears in some schedule
    CHECK(r.noOpOutcomes > 0);             // crash branches resolve slots as no-ops
}

TEST_CASE("bounded oracle: bound zero is a single vacuous schedule") {
    OracleConfig cfg;
    cfg.branchBound = 0;
    OracleReport r = exploreInterleavings(cfg);
    CHECK(r.pass());
    CHECK(r.schedulesExplored == 1);
}

TEST_CASE("bounded oracle: one request with crash choices never splits a slot") {
    OracleConfig cfg;
    cfg.branchBound = 4;
    cfg.requests = 1;
    OracleReport r = exploreInterleavings(cfg);
    CHECK(r.pass());  // per-slot consistency: committed or no-op, never both
}
