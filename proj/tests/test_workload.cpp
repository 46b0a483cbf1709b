#include <doctest.h>

#include "peerbft/sim/workload.hpp"

using namespace peerbft;
using namespace peerbft::sim;

TEST_CASE("conflict rate 0 never touches the shared key; 1 always does") {
    WorkloadSpec spec;
    spec.kind = WorkloadSpec::Kind::Micro;

    spec.conflictRate = 0.0;
    WorkloadGenerator none(spec, 7);
    for (std::uint32_t seq = 0; seq < 200; ++seq)
        CHECK(!none.isSharedKey(none.operation(1, seq)));

    spec.conflictRate = 1.0;
    WorkloadGenerator all(spec, 7);
    for (std::uint32_t seq = 0; seq < 200; ++seq)
        CHECK(all.isSharedKey(all.operation(1, seq)));
}

TEST_CASE("conflict rate 0.05 lands within one point over 10k requests") {
    WorkloadSpec spec;
    spec.kind = WorkloadSpec::Kind::Micro;
    spec.conflictRate = 0.05;
    WorkloadGenerator gen(spec, 99);
    std::uint32_t shared = 0, total = 0;
    for (ClientId c = 1; c <= 10; ++c)
        for (std::uint32_t seq = 0; seq < 1000; ++seq) {
            if (gen.isSharedKey(gen.operation(c, seq))) ++shared;
            ++total;
        }
    double fraction = static_cast<double>(shared) / total;
    CHECK(fraction > 0.04);
    CHECK(fraction < 0.06);
}

TEST_CASE("streams are deterministic and independent of query order") {
    WorkloadSpec spec;
    spec.kind = WorkloadSpec::Kind::Micro;
    spec.conflictRate = 0.3;
    WorkloadGenerator a(spec, 5), b(spec, 5);
    // Query b in reverse; ops must match a's.
    for (int seq = 99; seq >= 0; --seq)
        CHECK(b.operation(3, seq).encoded() == a.operation(3, seq).encoded());
    WorkloadGenerator c(spec, 6);
    bool anyDiff = false;
    for (std::uint32_t seq = 0; seq < 100; ++seq)
        if (c.operation(3, seq).encoded() != a.operation(3, seq).encoded()) anyDiff = true;
    CHECK(anyDiff);  // different seed, different stream
}

TEST_CASE("zipfian workload respects the read ratio and skews keys") {
    WorkloadSpec spec;
    spec.kind = WorkloadSpec::Kind::Zipf;
    spec.readRatio = 0.95;
    spec.keyCount = 1000;
    spec.zipfExponent = 0.99;
    WorkloadGenerator gen(spec, 11);

    std::uint32_t reads = 0, total = 0;
    std::map<Bytes, std::uint32_t> keyCounts;
    for (ClientId c = 1; c <= 5; ++c)
        for (std::uint32_t seq = 0; seq < 2000; ++seq) {
            KvOperation op = gen.operation(c, seq);
            if (op.kind == KvOperation::Kind::Read) ++reads;
            ++keyCounts[op.key];
            ++total;
        }
    double ratio = static_cast<double>(reads) / total;
    CHECK(ratio > 0.93);
    CHECK(ratio < 0.97);

    // Rank-0 key must dominate any deep-tail key by an order of magnitude.
    std::uint32_t hot = keyCounts[toBytes("key000000")];
    std::uint32_t cold = keyCounts[toBytes("key000900")];
    CHECK(hot > 10 * std::max<std::uint32_t>(cold, 1));
}
