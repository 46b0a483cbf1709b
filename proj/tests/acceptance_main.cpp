// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Every tolerance is pinned here in code.

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "peerbft/sim/checkers.hpp"
#include "peerbft/sim/metrics.hpp"
#include "peerbft/sim/oracle.hpp"

using namespace peerbft;
using namespace peerbft::sim;

namespace {

int failures = 0;

void report(int criterion, const std::string& what, bool pass,
            const std::vector<std::string>& details = {}) {
    std::printf("[%s] criterion %2d: %s\n", pass ? "PASS" : "FAIL", criterion, what.c_str());
    if (!pass) {
        ++failures;
        for (const auto& d : details) std::printf("         %s\n", d.c_str());
    }
}

Scenario symmetric(Micros oneWay) {
    Scenario sc;
    sc.replicas = 4;
    sc.maxFaulty = 1;
    sc.delta = 200'000;
    sc.cpInterval = 50;
    sc.expansionLimit = 5;
    sc.latency = Scenario::symmetricMatrix(4, oneWay);
    return sc;
}

std::vector<Micros> siteLatencies(const SimResult& r, std::uint32_t site) {
    std::vector<Micros> out;
    for (const auto& c : r.clients)
        if (c.site == site)
            for (const auto& op : c.ops)
                if (op.accepted) out.push_back(op.acceptTime - op.submitTime);
    return out;
}

// --------------------------------------------------------------------------
// 1 + 5: 500-run adversary sweep; all safety checks plus dependency linkage.

void criterion1and5() {
    auto catalog = adversaryCatalog();
    const double rates[] = {0.0, 0.02, 0.05, 1.0};
    std::vector<std::string> bad;
    std::uint64_t linkageFailures = 0;

    for (std::uint64_t seed = 1; seed <= 500; ++seed) {
        Scenario sc = symmetric(100'000);
        sc.seed = seed;
        sc.horizon = 400'000'000;
        sc.workload.requestsPerClient = 6;
        sc.workload.conflictRate = rates[(seed / catalog.size()) % 4];
        Behavior behavior = catalog[seed % catalog.size()];
        bool followerRole = behavior == Behavior::WithholdDepVerify ||
                            behavior == Behavior::PhantomDeps ||
                            behavior == Behavior::InflateDeps;
        ReplicaId adversary = followerRole ? 0 : static_cast<ReplicaId>(seed % sc.replicas);
        sc.adversaries = {{adversary, behavior, static_cast<Micros>(2'000'000)}};

        SimResult result = runSimulation(sc);
        CheckReport q = quiesceCheck(result);
        if (!q.pass && bad.size() < 5) {
            bad.push_back("seed " + std::to_string(seed) + " (" + behaviorName(behavior) +
                          "): " + q.failures.front());
        }
        if (!q.pass) ++linkageFailures;  // count every failed run

        CheckReport d = dependencyLinkageCheck(result);
        if (!d.pass) {
            ++linkageFailures;
            if (bad.size() < 5)
                bad.push_back("seed " + std::to_string(seed) + " linkage: " +
                              d.failures.front());
        }
    }
    report(1, "safety sweep: 500 seeded adversarial runs, zero violations",
           bad.empty() && linkageFailures == 0, bad);
    report(5, "dependency linkage holds for every conflicting committed pair",
           linkageFailures == 0, bad);
}

// --------------------------------------------------------------------------
// 2: fast-path step count, 302 ms +- 5 ms median.

void criterion2() {
    Scenario sc = symmetric(100'000);
    sc.clientLatency = std::vector<std::vector<Micros>>(4, std::vector<Micros>(4, 1'000));
    sc.workload.conflictRate = 0.0;
    sc.workload.requestsPerClient = 8;
    sc.clientStartStagger = 150'000;
    sc.seed = 2;
    SimResult r = runSimulation(sc);

    std::vector<Micros> samples;
    for (const auto& c : r.clients)
        for (const auto& op : c.ops)
            if (op.accepted) samples.push_back(op.acceptTime - op.submitTime);
    Micros median = nearestRankPercentile(samples, 50);
    bool pass = !samples.empty() && median >= 297'000 && median <= 307'000;
    report(2,
           "fast path: median latency " + std::to_string(median / 1000) +
               " ms == 302 ms +- 5 ms over symmetric 100 ms links",
           pass);
}

// --------------------------------------------------------------------------
// 3: two conflicting requests, agreeing reports, both fast committed.

void criterion3() {
    Scenario sc = symmetric(100'000);
    sc.clientLatency = std::vector<std::vector<Micros>>(4, std::vector<Micros>(4, 1'000));
    sc.workload.conflictRate = 1.0;  // both requests write the shared key
    sc.workload.requestsPerClient = 1;
    sc.workload.activeSites = 2;      // coordinators 0 and 1
    sc.clientStartStagger = 150'000;  // reports agree: everyone sees the first proposal
    sc.seed = 3;
    SimResult r = runSimulation(sc);

    CheckReport q = quiesceCheck(r, true);
    bool conflictingPair = false;
    std::map<SlotId, CommitRecord> committed;
    for (const auto& rep : r.replicas)
        if (rep.correct)
            for (const auto& [slot, rec] : rep.commitLog) committed.emplace(slot, rec);
    KvStore probe;
    for (auto a = committed.begin(); a != committed.end(); ++a)
        for (auto b = std::next(a); b != committed.end(); ++b)
            if (a->second.request.isRegular() && b->second.request.isRegular() &&
                requestsConflict(probe, a->second.request, b->second.request))
                conflictingPair = true;

    bool pass = q.pass && conflictingPair && r.sent("Prepare") == 0;
    report(3,
           "conflicting fast path: both requests commit with zero Prepare messages (" +
               std::to_string(r.sent("Prepare")) + " sent)",
           pass, q.failures);
}

// --------------------------------------------------------------------------
// 4: geo latency shape against the analytic path sums.

void criterion4() {
    Micros maxLink = 0;
    Scenario base = symmetric(100'000);
    base.latency = Scenario::geo4Matrix();
    for (const auto& row : base.latency)
        for (Micros v : row) maxLink = std::max(maxLink, v);

    auto runAt = [&](double conflictRate, std::uint64_t seed) {
        Scenario sc = base;
        sc.workload.conflictRate = conflictRate;
        sc.workload.requestsPerClient = 20;
        sc.clientStartStagger = 150'000;
        sc.seed = seed;
        sc.horizon = 400'000'000;
        return runSimulation(sc);
    };

    SimResult r0 = runAt(0.0, 40);
    SimResult r2 = runAt(0.02, 41);
    SimResult r100 = runAt(1.0, 42);

    bool pass = true;
    std::vector<std::string> details;
    for (std::uint32_t site = 0; site < 4; ++site) {
        Micros analytic = analyticFastPathLatency(base, site);
        Micros m0 = nearestRankPercentile(siteLatencies(r0, site), 50);
        Micros m2 = nearestRankPercentile(siteLatencies(r2, site), 50);
        Micros m100 = nearestRankPercentile(siteLatencies(r100, site), 50);
        Micros bound = analytic + 2 * maxLink + 20'000;

        bool ok0 = std::llabs(m0 - analytic) <= 10'000;
        bool ok2 = std::llabs(m2 - analytic) <= 10'000;
        bool okHi = m100 > m2 && m100 < bound;
        if (!(ok0 && ok2 && okHi)) pass = false;
        details.push_back("site " + std::to_string(site) + ": analytic " +
                          std::to_string(analytic / 1000) + " ms, p50@0% " +
                          std::to_string(m0 / 1000) + ", p50@2% " + std::to_string(m2 / 1000) +
                          ", p50@100% " + std::to_string(m100 / 1000) + " (bound " +
                          std::to_string(bound / 1000) + ")");
    }
    report(4, "geo latency: per-site medians match analytic path sums; reconciliation bounded",
           pass, details);
    if (pass)
        for (const auto& d : details) std::printf("         %s\n", d.c_str());
}

// --------------------------------------------------------------------------
// 6: view-change correctness for SilentCoordinator and WithholdDepVerify.

void criterion6() {
    std::vector<std::string> details;
    bool pass = true;

    {  // WithholdDepVerify: client retransmission off isolates the
       // permuted-quorum re-proposal path.
        Scenario sc = symmetric(100'000);
        sc.adversaries = {{0, Behavior::WithholdDepVerify, 0}};
        sc.clientRetransmit = false;
        sc.workload.requestsPerClient = 2;
        sc.workload.activeSites = 4;
        sc.seed = 6;
        sc.horizon = 600'000'000;
        SimResult r = runSimulation(sc);

        CheckReport q = quiesceCheck(r, true);
        if (!q.pass) {
            pass = false;
            details.insert(details.end(), q.failures.begin(), q.failures.end());
        }

        // Affected slots committed as no-op within views 0..N-1.
        bool sawNoOp = false;
        for (const auto& ev : r.trace)
            if (ev.kind == "commit" && ev.info.find("viewchange") == 0) {
                auto vpos = ev.info.find("view=");
                int view = std::stoi(ev.info.substr(vpos + 5));
                if (view < 0 || view >= 4) {
                    pass = false;
                    details.push_back("slot resolved outside one..N rotations: " + ev.info);
                }
                sawNoOp = true;
            }
        if (!sawNoOp) {
            pass = false;
            details.push_back("WithholdDepVerify never produced a view-change commit");
        }

        // Re-proposal with a permuted quorum: same request hash proposed twice
        // by one coordinator with different fast quorums; the retry committed.
        bool permuted = false;
        std::map<std::string, std::vector<std::pair<SlotId, std::string>>> proposals;
        for (const auto& ev : r.trace) {
            if (ev.kind != "propose") continue;
            auto fEnd = ev.info.find(" req=");
            std::string quorum = ev.info.substr(2, fEnd - 2);
            std::string req = ev.info.substr(fEnd + 5);
            proposals[req].push_back({ev.slot, quorum});
        }
        for (const auto& [req, entries] : proposals) {
            for (size_t i = 1; i < entries.size(); ++i) {
                if (entries[i].first.coordinator == entries[0].first.coordinator &&
                    entries[i].second != entries[0].second)
                    permuted = true;
            }
        }
        if (!permuted) {
            pass = false;
            details.push_back("no re-proposal with a rotated fast quorum observed");
        }
    }

    {  // SilentCoordinator: rebroadcast on; the request completes elsewhere.
        Scenario sc = symmetric(100'000);
        sc.adversaries = {{1, Behavior::SilentCoordinator, 0}};
        sc.workload.requestsPerClient = 2;
        sc.seed = 61;
        sc.horizon = 600'000'000;
        SimResult r = runSimulation(sc);
        CheckReport q = quiesceCheck(r, true);
        if (!q.pass) {
            pass = false;
            details.insert(details.end(), q.failures.begin(), q.failures.end());
        }
        bool noOpOnAdversary = false;
        for (const auto& rep : r.replicas) {
            if (!rep.correct) continue;
            for (const auto& [slot, rec] : rep.commitLog) {
                if (slot.coordinator == 1 && rec.request.isNoOp()) noOpOnAdversary = true;
                // Checkpoint slots must resolve via the CRC, never as no-op.
                if (slot.counter % sc.cpInterval == 0 && rec.request.isNoOp()) {
                    pass = false;
                    details.push_back("checkpoint slot " + slotToString(slot) +
                                      " resolved as no-op");
                }
            }
        }
        if (!noOpOnAdversary) {
            pass = false;
            details.push_back("silent coordinator slots never resolved as no-op");
        }
    }

    report(6, "view change: no-op within one..N rotations, permuted-quorum re-proposal commits",
           pass, details);
}

// --------------------------------------------------------------------------
// 7: checkpointing, memory bound, mid-run bootstrap via state transfer.

void criterion7() {
    Scenario sc = symmetric(100'000);
    sc.cpInterval = 50;
    sc.expansionLimit = 5;
    sc.workload.requestsPerClient = 667;  // three active sites: 2001 requests
    sc.workload.activeSites = 3;          // replica 3 coordinates no client requests
    sc.resetReplicaAt = 100'000'000;      // wiped mid-run, must catch up via fetch
    sc.resetReplica = 3;
    sc.seed = 7;
    sc.horizon = 1'000'000'000;
    SimResult r = runSimulation(sc);

    std::vector<std::string> details;
    bool pass = true;

    CheckReport q = quiesceCheck(r, true);
    if (!q.pass) {
        pass = false;
        details.insert(details.end(), q.failures.begin(), q.failures.end());
    }

    std::uint64_t highWater = 0;
    size_t checkpoints = 0;
    for (const auto& rep : r.replicas) {
        highWater = std::max(highWater, rep.agreementStats.retainedSlotsHighWater);
        checkpoints = std::max(checkpoints, rep.checkpointLog.size());
    }
    if (highWater > 2 * sc.cpInterval) {
        pass = false;
        details.push_back("retained slots per coordinator " + std::to_string(highWater) +
                          " exceeds " + std::to_string(2 * sc.cpInterval));
    }
    if (checkpoints < 3) {
        pass = false;
        details.push_back("too few checkpoints: " + std::to_string(checkpoints));
    }

    bool applied = false;
    for (const auto& ev : r.trace)
        if (ev.kind == "checkpoint-applied" && ev.actor == "r3") applied = true;
    if (!applied) {
        pass = false;
        details.push_back("restored replica never applied a fetched checkpoint");
    }

    report(7,
           "checkpointing: identical records, retained slots <= " +
               std::to_string(2 * sc.cpInterval) + " (max " + std::to_string(highWater) +
               "), bootstrap converges (" + std::to_string(checkpoints) + " checkpoints)",
           pass, details);
}

// --------------------------------------------------------------------------
// 8: unblock algorithm under InflateDeps.

void criterion8() {
    Scenario sc = symmetric(100'000);
    sc.adversaries = {{0, Behavior::InflateDeps, 0}};
    sc.workload.conflictRate = 0.6;
    sc.workload.requestsPerClient = 6;
    sc.seed = 8;
    sc.horizon = 600'000'000;
    SimResult r = runSimulation(sc);

    std::vector<std::string> details;
    CheckReport q = quiesceCheck(r, true);
    std::uint64_t unblocks = 0;
    bool unblockInTrace = false;
    for (const auto& rep : r.replicas)
        if (rep.correct) unblocks += rep.execStats.unblockExecutions;
    for (const auto& ev : r.trace)
        if (ev.kind == "unblock-exec") unblockInTrace = true;

    bool pass = q.pass && unblocks > 0 && unblockInTrace;
    if (!q.pass) details.insert(details.end(), q.failures.begin(), q.failures.end());
    if (unblocks == 0) details.push_back("no unblock-case executions occurred");
    report(8,
           "unblock algorithm: " + std::to_string(unblocks) +
               " unblock executions, all requests executed, identical orders",
           pass, details);
}

// --------------------------------------------------------------------------
// 9: bounded exhaustive interleaving oracle.

void criterion9() {
    auto start = std::chrono::steady_clock::now();
    std::vector<std::string> details;
    bool pass = true;

    OracleConfig two;
    two.branchBound = 12;
    two.requests = 2;
    OracleReport r2 = exploreInterleavings(two);
    if (!r2.pass()) {
        pass = false;
        details.push_back("two-request exploration found violations");
        details.insert(details.end(), r2.counterexample.begin(), r2.counterexample.end());
    }
    if (r2.executionOrders.size() < 2) {
        pass = false;
        details.push_back("expected both relative orders across schedules");
    }

    OracleConfig one;
    one.branchBound = 12;
    one.requests = 1;
    OracleReport r1 = exploreInterleavings(one);
    if (!r1.pass()) {
        pass = false;
        details.push_back("one-request crash exploration found violations");
    }

    OracleConfig vacuous;
    vacuous.branchBound = 0;
    OracleReport r0 = exploreInterleavings(vacuous);
    if (!r0.pass() || r0.schedulesExplored != 1) {
        pass = false;
        details.push_back("bound 0 must vacuously pass with one schedule");
    }

    auto secs = std::chrono::duration_cast<std::chrono::seconds>(
                    std::chrono::steady_clock::now() - start)
                    .count();
    if (secs >= 120) {
        pass = false;
        details.push_back("oracle exceeded the two-minute budget");
    }
    report(9,
           "bounded oracle: " +
               std::to_string(r2.schedulesExplored + r1.schedulesExplored) + " schedules, " +
               std::to_string(r2.executionOrders.size()) + " orders observed, " +
               std::to_string(secs) + " s",
           pass, details);
}

// --------------------------------------------------------------------------
// 10: liveness under synchrony plus the exact timer constants.

void criterion10() {
    std::vector<std::string> details;
    bool pass = true;

    ReplicaConfig cfg;
    cfg.delta = 200'000;
    if (cfg.proposeTimeout() != 2 * cfg.delta || cfg.commitTimeout() != 9 * cfg.delta ||
        cfg.viewChangeTimeout() != 5 * cfg.delta || cfg.vcCommitTimeout() != 3 * cfg.delta ||
        cfg.queryExecTimeout() != 4 * cfg.delta) {
        pass = false;
        details.push_back("timer constants are not 2/9/5/3/4 delta");
    }
    ClientConfig ccfg;
    if (ccfg.retryFactor != 4) {
        pass = false;
        details.push_back("client retry constant is not 4 delta");
    }

    // Link delays (150 ms + jitter <= 50 ms) stay within delta = 200 ms.
    for (Behavior b : adversaryCatalog()) {
        Scenario sc = symmetric(150'000);
        sc.jitter = 50'000;
        sc.workload.requestsPerClient = 3;
        sc.workload.conflictRate = 0.05;
        bool followerRole = b == Behavior::WithholdDepVerify || b == Behavior::PhantomDeps ||
                            b == Behavior::InflateDeps;
        sc.adversaries = {{followerRole ? ReplicaId(0) : ReplicaId(2), b,
                           static_cast<Micros>(1'000'000)}};
        sc.seed = 100 + static_cast<std::uint64_t>(b);
        sc.horizon = 600'000'000;
        SimResult r = runSimulation(sc);
        for (const auto& c : r.clients)
            for (const auto& op : c.ops)
                if (!op.accepted) {
                    pass = false;
                    details.push_back(std::string("request not accepted under ") +
                                      behaviorName(b) + " (client " + std::to_string(c.id) +
                                      " ts " + std::to_string(op.timestamp) + ")");
                }
    }
    report(10, "liveness under synchrony: every correct client's request accepted; "
               "timers exactly 2/9/5/3/4 delta",
           pass, details);
}

}  // namespace

int main() {
    auto start = std::chrono::steady_clock::now();
    criterion1and5();
    criterion2();
    criterion3();
    criterion4();
    criterion6();
    criterion7();
    criterion8();
    criterion9();
    criterion10();
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(
                    std::chrono::steady_clock::now() - start)
                    .count();
    std::printf("%s: acceptance suite finished in %llds\n", failures == 0 ? "PASS" : "FAIL",
                static_cast<long long>(secs));
    return failures == 0 ? 0 : 1;
}
