#pragma once

#include <map>
#include <stdexcept>

#include "peerbft/types.hpp"

namespace peerbft {

// Protocol timeouts as multiples of the synchrony bound delta.
struct Timeouts {
    int proposeFactor = 2;      // rebroadcast a stalled DepPropose
    int commitFactor = 9;       // slot must commit or a view change starts
    int viewChangeFactor = 5;   // escalate when a NewView does not arrive
    int vcCommitFactor = 3;     // commit timeout after a NewView installs
    int queryExecFactor = 4;    // query peers for a committed result
    int retransmitFactor = 2;   // resend latest messages for open slots
    int clientRetryFactor = 4;  // client broadcasts its request to everyone
};

struct ReplicaConfig {
    ReplicaId id = 0;
    std::uint32_t replicaCount = 4;  // N = 3f+1
    std::uint32_t maxFaulty = 1;     // f
    Micros delta = 200'000;          // one-way synchrony bound
    std::uint64_t cpInterval = 50;
    std::uint64_t expansionLimit = 5;  // k
    std::uint32_t batchLimit = 1;      // 1 disables batching
    Timeouts timeouts;
    // One-way delay hints used to pick the 2f closest followers.
    std::map<ReplicaId, Micros> latencyHints;

    void validate() const {
        if (maxFaulty < 1) throw std::invalid_argument("f must be at least 1");
        if (replicaCount < 3 * maxFaulty + 1)
            throw std::invalid_argument("N must be at least 3f+1");
        if (id >= replicaCount) throw std::invalid_argument("replica id out of range");
        if (delta <= 0) throw std::invalid_argument("delta must be positive");
        if (expansionLimit < 1) throw std::invalid_argument("expansion limit must be at least 1");
        if (cpInterval < expansionLimit)
            throw std::invalid_argument("cp_interval must be at least the expansion limit");
    }

    std::uint32_t quorum() const { return 2 * maxFaulty + 1; }       // 2f+1
    std::uint32_t fastQuorumSize() const { return 2 * maxFaulty; }   // 2f
    std::uint64_t orderingWindow() const { return 2 * cpInterval; }  // slots per coordinator

    Micros proposeTimeout() const { return timeouts.proposeFactor * delta; }
    Micros commitTimeout() const { return timeouts.commitFactor * delta; }
    Micros viewChangeTimeout() const { return timeouts.viewChangeFactor * delta; }
    Micros vcCommitTimeout() const { return timeouts.vcCommitFactor * delta; }
    Micros queryExecTimeout() const { return timeouts.queryExecFactor * delta; }
    Micros retransmitInterval() const { return timeouts.retransmitFactor * delta; }
};

}  // namespace peerbft
