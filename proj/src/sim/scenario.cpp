#include "peerbft/sim/scenario.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace peerbft::sim {

using nlohmann::json;

const char* behaviorName(Behavior b) {
    switch (b) {
        case Behavior::Honest: return "Honest";
        case Behavior::Crash: return "Crash";
        case Behavior::EquivocateDepPropose: return "EquivocateDepPropose";
        case Behavior::WithholdDepVerify: return "WithholdDepVerify";
        case Behavior::PhantomDeps: return "PhantomDeps";
        case Behavior::InflateDeps: return "InflateDeps";
        case Behavior::SilentCoordinator: return "SilentCoordinator";
        case Behavior::DivergentCheckpointVote: return "DivergentCheckpointVote";
        case Behavior::BadNewView: return "BadNewView";
    }
    return "Honest";
}

Behavior behaviorFromName(const std::string& name) {
    for (Behavior b :
         {Behavior::Honest, Behavior::Crash, Behavior::EquivocateDepPropose,
          Behavior::WithholdDepVerify, Behavior::PhantomDeps, Behavior::InflateDeps,
          Behavior::SilentCoordinator, Behavior::DivergentCheckpointVote, Behavior::BadNewView})
        if (name == behaviorName(b)) return b;
    throw std::invalid_argument("unknown adversary behavior: " + name);
}

std::vector<Behavior> adversaryCatalog() {
    return {Behavior::Crash,          Behavior::EquivocateDepPropose,
            Behavior::WithholdDepVerify, Behavior::PhantomDeps,
            Behavior::InflateDeps,    Behavior::SilentCoordinator,
            Behavior::DivergentCheckpointVote, Behavior::BadNewView};
}

Micros Scenario::replicaDelay(ReplicaId from, ReplicaId to) const {
    if (from == to) return 0;
    if (from < latency.size() && to < latency[from].size()) return latency[from][to];
    return delta / 2;
}

Micros Scenario::clientDelay(std::uint32_t site, ReplicaId to) const {
    if (site < clientLatency.size() && to < clientLatency[site].size())
        return clientLatency[site][to];
    // Default: co-located with the site's replica, detour via it otherwise.
    if (site == to) return 1000;
    return 1000 + replicaDelay(static_cast<ReplicaId>(site), to);
}

bool Scenario::isFaulty(ReplicaId r) const {
    for (const auto& a : adversaries)
        if (a.replica == r && a.behavior != Behavior::Honest) return true;
    return false;
}

std::vector<std::vector<Micros>> Scenario::symmetricMatrix(std::uint32_t n, Micros oneWay) {
    std::vector<std::vector<Micros>> m(n, std::vector<Micros>(n, oneWay));
    for (std::uint32_t i = 0; i < n; ++i) m[i][i] = 0;
    return m;
}

std::vector<std::vector<Micros>> Scenario::geo4Matrix() {
    auto ms = [](Micros v) { return v * 1000; };
    return {{0, ms(70), ms(110), ms(81)},
            {ms(70), 0, ms(60), ms(127)},
            {ms(110), ms(60), 0, ms(92)},
            {ms(81), ms(127), ms(92), 0}};
}

namespace {

json matrixToJson(const std::vector<std::vector<Micros>>& m) {
    json rows = json::array();
    for (const auto& row : m) {
        json r = json::array();
        for (auto v : row) r.push_back(v);
        rows.push_back(r);
    }
    return rows;
}

std::vector<std::vector<Micros>> matrixFromJson(const json& j) {
    std::vector<std::vector<Micros>> m;
    for (const auto& row : j) {
        std::vector<Micros> r;
        for (const auto& v : row) r.push_back(v.get<Micros>());
        m.push_back(std::move(r));
    }
    return m;
}

}  // namespace

std::string Scenario::toJson() const {
    json j;
    j["name"] = name;
    j["replicas"] = replicas;
    j["f"] = maxFaulty;
    j["delta_us"] = delta;
    j["cp_interval"] = cpInterval;
    j["expansion_limit"] = expansionLimit;
    j["batch_limit"] = batchLimit;
    j["latency_us"] = matrixToJson(latency);
    if (!clientLatency.empty()) j["client_latency_us"] = matrixToJson(clientLatency);
    j["jitter_us"] = jitter;
    j["drop_prob"] = dropProb;
    j["dup_prob"] = dupProb;
    json advs = json::array();
    for (const auto& a : adversaries) {
        json aj;
        aj["replica"] = a.replica;
        aj["behavior"] = behaviorName(a.behavior);
        if (a.behavior == Behavior::Crash) aj["crash_at_us"] = a.crashAt;
        advs.push_back(aj);
    }
    j["adversaries"] = advs;
    json w;
    w["kind"] = workload.kind == WorkloadSpec::Kind::Micro ? "micro" : "zipf";
    w["conflict_rate"] = workload.conflictRate;
    w["payload_bytes"] = workload.payloadBytes;
    w["read_ratio"] = workload.readRatio;
    w["key_count"] = workload.keyCount;
    w["zipf_exponent"] = workload.zipfExponent;
    w["clients_per_site"] = workload.clientsPerSite;
    w["requests_per_client"] = workload.requestsPerClient;
    w["think_time_us"] = workload.thinkTime;
    w["active_sites"] = workload.activeSites;
    j["workload"] = w;
    j["seed"] = seed;
    j["horizon_us"] = horizon;
    j["client_retransmit"] = clientRetransmit;
    j["client_start_stagger_us"] = clientStartStagger;
    if (resetReplicaAt) {
        j["reset_replica_at_us"] = *resetReplicaAt;
        j["reset_replica"] = resetReplica;
    }
    j["trace_messages"] = traceMessages;
    return j.dump(2);
}

Scenario Scenario::fromJson(const std::string& text) {
    json j = json::parse(text);
    Scenario s;
    s.name = j.value("name", s.name);
    s.replicas = j.value("replicas", s.replicas);
    s.maxFaulty = j.value("f", s.maxFaulty);
    s.delta = j.value("delta_us", s.delta);
    s.cpInterval = j.value("cp_interval", s.cpInterval);
    s.expansionLimit = j.value("expansion_limit", s.expansionLimit);
    s.batchLimit = j.value("batch_limit", s.batchLimit);
    if (j.contains("latency_us")) s.latency = matrixFromJson(j["latency_us"]);
    if (j.contains("client_latency_us")) s.clientLatency = matrixFromJson(j["client_latency_us"]);
    s.jitter = j.value("jitter_us", s.jitter);
    s.dropProb = j.value("drop_prob", s.dropProb);
    s.dupProb = j.value("dup_prob", s.dupProb);
    if (j.contains("adversaries")) {
        for (const auto& aj : j["adversaries"]) {
            AdversarySpec a;
            a.replica = aj.value("replica", 0u);
            a.behavior = behaviorFromName(aj.value("behavior", "Honest"));
            a.crashAt = aj.value("crash_at_us", Micros(0));
            s.adversaries.push_back(a);
        }
    }
    if (j.contains("workload")) {
        const auto& w = j["workload"];
        s.workload.kind = w.value("kind", std::string("micro")) == "zipf"
                              ? WorkloadSpec::Kind::Zipf
                              : WorkloadSpec::Kind::Micro;
        s.workload.conflictRate = w.value("conflict_rate", s.workload.conflictRate);
        s.workload.payloadBytes = w.value("payload_bytes", s.workload.payloadBytes);
        s.workload.readRatio = w.value("read_ratio", s.workload.readRatio);
        s.workload.keyCount = w.value("key_count", s.workload.keyCount);
        s.workload.zipfExponent = w.value("zipf_exponent", s.workload.zipfExponent);
        s.workload.clientsPerSite = w.value("clients_per_site", s.workload.clientsPerSite);
        s.workload.requestsPerClient =
            w.value("requests_per_client", s.workload.requestsPerClient);
        s.workload.thinkTime = w.value("think_time_us", s.workload.thinkTime);
        s.workload.activeSites = w.value("active_sites", s.workload.activeSites);
    }
    s.seed = j.value("seed", s.seed);
    s.horizon = j.value("horizon_us", s.horizon);
    s.clientRetransmit = j.value("client_retransmit", s.clientRetransmit);
    s.clientStartStagger = j.value("client_start_stagger_us", s.clientStartStagger);
    if (j.contains("reset_replica_at_us")) {
        s.resetReplicaAt = j["reset_replica_at_us"].get<Micros>();
        s.resetReplica = j.value("reset_replica", s.resetReplica);
    }
    s.traceMessages = j.value("trace_messages", s.traceMessages);
    if (s.latency.empty())
        s.latency = s.replicas == 4 ? geo4Matrix() : symmetricMatrix(s.replicas, s.delta / 2);
    return s;
}

Scenario Scenario::fromJsonFile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scenario file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return fromJson(ss.str());
}

void Scenario::writeJsonFile(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write scenario file: " + path);
    out << toJson() << "\n";
}

}  // namespace peerbft::sim
