#pragma once

#include "peerbft/transport/node.hpp"

namespace peerbft::transport {

// Static deployment description: peer table, client identities and key
// seeds. Key material is derived deterministically from the seeds, which is
// test-grade provisioning; swap the seeds for externally managed keys in a
// real deployment.
struct ClusterConfig {
    std::string scheme = "ed25519";
    Micros delta = 200'000;
    std::uint32_t maxFaulty = 1;
    std::uint64_t cpInterval = 50;
    std::uint64_t expansionLimit = 5;
    std::uint32_t batchLimit = 1;

    struct ReplicaEntry {
        ReplicaId id = 0;
        std::string host = "127.0.0.1";
        std::uint16_t port = 0;
        std::string keySeed;
    };
    struct ClientEntry {
        ClientId id = 0;
        std::string keySeed;
    };
    std::vector<ReplicaEntry> replicas;
    std::vector<ClientEntry> clients;

    std::uint32_t replicaCount() const { return static_cast<std::uint32_t>(replicas.size()); }

    Keyring keyringFor(SignerId who) const;
    NodeConfig nodeConfigFor(ReplicaId id) const;

    static ClusterConfig fromJsonFile(const std::string& path);
    void writeJsonFile(const std::string& path) const;
    static ClusterConfig localCluster(std::uint32_t replicas, std::uint16_t portBase,
                                      std::uint32_t clients, const std::string& scheme);
};

}  // namespace peerbft::transport
