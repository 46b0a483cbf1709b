#pragma once

#include <set>

#include "peerbft/sim/scenario.hpp"

namespace peerbft::sim {

// Bounded exhaustive exploration of message-delivery interleavings on a tiny
// instance: N=4, one or two conflicting requests, optional crash of a
// coordinator. The first `branchBound` scheduling decisions are enumerated
// exhaustively (per-destination FIFO delivery choices plus crash-now
// choices); each schedule then completes deterministically, with timers
// firing only at quiescence. Safety is asserted on every completed schedule.
struct OracleConfig {
    std::uint32_t branchBound = 5;
    bool exploreCrashes = true;
    std::uint32_t requests = 2;  // conflicting writes from distinct coordinators
    Micros delta = 200'000;
    std::uint64_t maxStepsPerSchedule = 40'000;
};

struct OracleReport {
    std::uint64_t schedulesExplored = 0;
    std::uint64_t violations = 0;
    std::uint64_t committedOutcomes = 0;  // schedules where every request committed
    std::uint64_t noOpOutcomes = 0;       // schedules where some slot became a no-op
    std::set<std::string> executionOrders;
    std::vector<std::string> counterexample;  // decision log of the first violation

    bool pass() const { return violations == 0; }
};

OracleReport exploreInterleavings(const OracleConfig& cfg);

}  // namespace peerbft::sim
