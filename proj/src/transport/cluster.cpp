#include "peerbft/transport/cluster.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace peerbft::transport {

using nlohmann::json;

Keyring ClusterConfig::keyringFor(SignerId who) const {
    auto schemePtr = std::shared_ptr<const SignatureScheme>(makeScheme(scheme));
    Keyring ring(schemePtr);
    std::string ownSeed;
    for (const auto& r : replicas) {
        ring.addPublicKey(SignerId::replica(r.id),
                          schemePtr->deriveKeyPair(r.keySeed).publicKey);
        if (who.kind == SignerId::Kind::Replica && who.id == r.id) ownSeed = r.keySeed;
    }
    for (const auto& c : clients) {
        ring.addPublicKey(SignerId::client(c.id), schemePtr->deriveKeyPair(c.keySeed).publicKey);
        if (who.kind == SignerId::Kind::Client && who.id == c.id) ownSeed = c.keySeed;
    }
    if (ownSeed.empty()) throw std::runtime_error("identity missing from cluster config");
    ring.setOwn(who, schemePtr->deriveKeyPair(ownSeed));
    return ring;
}

NodeConfig ClusterConfig::nodeConfigFor(ReplicaId id) const {
    NodeConfig nc;
    nc.replica.id = id;
    nc.replica.replicaCount = replicaCount();
    nc.replica.maxFaulty = maxFaulty;
    nc.replica.delta = delta;
    nc.replica.cpInterval = cpInterval;
    nc.replica.expansionLimit = expansionLimit;
    nc.replica.batchLimit = batchLimit;
    for (const auto& r : replicas) {
        if (r.id == id) {
            nc.listenHost = r.host;
            nc.listenPort = r.port;
        } else {
            nc.peers[r.id] = {r.host, r.port};
            nc.replica.latencyHints[r.id] = 0;  // localhost deployments: ties by id
        }
    }
    return nc;
}

ClusterConfig ClusterConfig::fromJsonFile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open cluster config: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    json j = json::parse(ss.str());

    ClusterConfig cfg;
    cfg.scheme = j.value("scheme", cfg.scheme);
    cfg.delta = j.value("delta_us", cfg.delta);
    cfg.maxFaulty = j.value("f", cfg.maxFaulty);
    cfg.cpInterval = j.value("cp_interval", cfg.cpInterval);
    cfg.expansionLimit = j.value("expansion_limit", cfg.expansionLimit);
    cfg.batchLimit = j.value("batch_limit", cfg.batchLimit);
    for (const auto& rj : j.at("replicas")) {
        ReplicaEntry r;
        r.id = rj.at("id").get<ReplicaId>();
        r.host = rj.value("host", r.host);
        r.port = rj.at("port").get<std::uint16_t>();
        r.keySeed = rj.at("key_seed").get<std::string>();
        cfg.replicas.push_back(std::move(r));
    }
    if (j.contains("clients")) {
        for (const auto& cj : j["clients"]) {
            ClientEntry c;
            c.id = cj.at("id").get<ClientId>();
            c.keySeed = cj.at("key_seed").get<std::string>();
            cfg.clients.push_back(std::move(c));
        }
    }
    return cfg;
}

void ClusterConfig::writeJsonFile(const std::string& path) const {
    json j;
    j["scheme"] = scheme;
    j["delta_us"] = delta;
    j["f"] = maxFaulty;
    j["cp_interval"] = cpInterval;
    j["expansion_limit"] = expansionLimit;
    j["batch_limit"] = batchLimit;
    json rs = json::array();
    for (const auto& r : replicas) {
        json rj;
        rj["id"] = r.id;
        rj["host"] = r.host;
        rj["port"] = r.port;
        rj["key_seed"] = r.keySeed;
        rs.push_back(rj);
    }
    j["replicas"] = rs;
    json cs = json::array();
    for (const auto& c : clients) {
        json cj;
        cj["id"] = c.id;
        cj["key_seed"] = c.keySeed;
        cs.push_back(cj);
    }
    j["clients"] = cs;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write cluster config: " + path);
    out << j.dump(2) << "\n";
}

ClusterConfig ClusterConfig::localCluster(std::uint32_t replicas, std::uint16_t portBase,
                                          std::uint32_t clients, const std::string& scheme) {
    ClusterConfig cfg;
    cfg.scheme = scheme;
    for (ReplicaId r = 0; r < replicas; ++r)
        cfg.replicas.push_back({r, "127.0.0.1", static_cast<std::uint16_t>(portBase + r),
                                "replica-seed-" + std::to_string(r)});
    for (ClientId c = 1; c <= clients; ++c)
        cfg.clients.push_back({c, "client-seed-" + std::to_string(c)});
    return cfg;
}

}  // namespace peerbft::transport
