#pragma once

#include <optional>
#include <string>
#include <vector>

#include "peerbft/config.hpp"
#include "peerbft/types.hpp"

namespace peerbft::sim {

enum class Behavior {
    Honest,
    Crash,
    EquivocateDepPropose,
    WithholdDepVerify,
    PhantomDeps,
    InflateDeps,
    SilentCoordinator,
    DivergentCheckpointVote,
    BadNewView,
};

const char* behaviorName(Behavior b);
Behavior behaviorFromName(const std::string& name);

// The fault-injection catalog cycled through by sweeps, Honest excluded.
std::vector<Behavior> adversaryCatalog();

struct AdversarySpec {
    ReplicaId replica = 0;
    Behavior behavior = Behavior::Honest;
    Micros crashAt = 0;  // Crash only
};

struct WorkloadSpec {
    enum class Kind { Micro, Zipf };

    Kind kind = Kind::Micro;
    double conflictRate = 0.0;  // micro: shared-key write probability
    std::uint32_t payloadBytes = 16;
    double readRatio = 0.5;  // zipf
    std::uint32_t keyCount = 1000;
    double zipfExponent = 0.99;
    std::uint32_t clientsPerSite = 1;
    std::uint32_t requestsPerClient = 8;
    Micros thinkTime = 0;
    std::uint32_t activeSites = 0;  // 0: every site runs clients
};

// One simulation run, fully determined by this structure plus the seed.
struct Scenario {
    std::string name = "default";
    std::uint32_t replicas = 4;
    std::uint32_t maxFaulty = 1;
    Micros delta = 200'000;
    std::uint64_t cpInterval = 50;
    std::uint64_t expansionLimit = 5;
    std::uint32_t batchLimit = 1;
    std::vector<std::vector<Micros>> latency;        // one-way, replica x replica
    std::vector<std::vector<Micros>> clientLatency;  // site x replica; derived when empty
    Micros jitter = 0;
    double dropProb = 0.0;
    double dupProb = 0.0;
    std::vector<AdversarySpec> adversaries;
    WorkloadSpec workload;
    std::uint64_t seed = 1;
    Micros horizon = 120'000'000;
    bool clientRetransmit = true;
    Micros clientStartStagger = 0;  // client i starts at base + i * stagger
    std::optional<Micros> resetReplicaAt;  // wipe and restart one replica mid-run
    ReplicaId resetReplica = 3;
    bool traceMessages = false;

    Micros clientDelay(std::uint32_t site, ReplicaId to) const;
    Micros replicaDelay(ReplicaId from, ReplicaId to) const;
    std::uint32_t siteCount() const { return replicas; }
    bool isFaulty(ReplicaId r) const;

    std::string toJson() const;
    static Scenario fromJson(const std::string& text);
    static Scenario fromJsonFile(const std::string& path);
    void writeJsonFile(const std::string& path) const;

    static std::vector<std::vector<Micros>> symmetricMatrix(std::uint32_t n, Micros oneWay);
    // Synthetic four-site geography with one-way delays in the 59..127 ms
    // band; the exact pairwise values are configuration.
    static std::vector<std::vector<Micros>> geo4Matrix();
};

}  // namespace peerbft::sim
