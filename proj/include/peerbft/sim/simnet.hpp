#pragma once

#include "peerbft/client.hpp"
#include "peerbft/replica.hpp"
#include "peerbft/sim/scenario.hpp"
#include "peerbft/sim/workload.hpp"

namespace peerbft::sim {

struct TraceEvent {
    Micros time = 0;
    std::string actor;  // "r0".."rN", "c<id>"
    std::string kind;
    SlotId slot;
    std::string info;
};

struct ClientOp {
    Timestamp timestamp = 0;
    KvOperation operation;
    Micros submitTime = 0;
    Micros acceptTime = 0;  // 0 while unaccepted
    Bytes result;
    bool accepted = false;
};

struct ClientResult {
    ClientId id = 0;
    std::uint32_t site = 0;
    std::vector<ClientOp> ops;
};

struct ReplicaResult {
    ReplicaId id = 0;
    bool correct = true;
    Digest stateDigest;
    std::map<SlotId, CommitRecord> commitLog;
    std::vector<ExecutedRequest> executionLog;
    std::vector<CheckpointRecord> checkpointLog;
    AgreementStats agreementStats;
    ExecutionStats execStats;
    std::uint64_t invalidSignatures = 0;
};

struct SimResult {
    Micros endTime = 0;
    bool horizonReached = false;
    std::uint64_t deliveredMessages = 0;
    std::uint64_t droppedMessages = 0;
    std::map<std::string, std::uint64_t> sentByKind;
    std::vector<TraceEvent> trace;
    std::vector<ReplicaResult> replicas;
    std::vector<ClientResult> clients;

    std::uint64_t sent(const std::string& kind) const {
        auto it = sentByKind.find(kind);
        return it == sentByKind.end() ? 0 : it->second;
    }
};

SimResult runSimulation(const Scenario& scenario);

// Ideal fault-free fast-path timing over the latency matrix: the time until
// the client at `site` collects f+1 matching replies, assuming its home
// replica coordinates and all messages travel exactly one-way delays.
Micros analyticFastPathLatency(const Scenario& scenario, std::uint32_t site);

}  // namespace peerbft::sim
