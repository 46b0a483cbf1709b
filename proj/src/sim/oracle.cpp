#include "peerbft/sim/oracle.hpp"

#include <deque>

#include "peerbft/app/kvstore.hpp"
#include "peerbft/client.hpp"
#include "peerbft/replica.hpp"

namespace peerbft::sim {

namespace {

constexpr std::uint32_t kReplicas = 4;

struct World {
    const OracleConfig& cfg;
    std::shared_ptr<const SignatureScheme> scheme = makeTagScheme();
    std::vector<std::unique_ptr<Replica>> replicas;
    std::vector<std::unique_ptr<ClientSession>> clients;
    std::vector<ClientId> clientIds;
    std::array<bool, kReplicas> crashed{};
    bool crashUsed = false;

    std::array<std::deque<ProtocolMessage>, kReplicas> pool;  // per-destination FIFO
    // Armed timers as (deadline, token) per actor; fired only at quiescence.
    std::array<std::multimap<Micros, std::uint64_t>, kReplicas> replicaTimers;
    std::vector<std::multimap<Micros, std::uint64_t>> clientTimers;
    Micros virtualNow = 0;

    std::vector<std::string> log;
    std::vector<size_t> optionCounts;
    std::vector<bool> accepted;

    explicit World(const OracleConfig& c) : cfg(c) {
        for (std::uint32_t i = 0; i < c.requests; ++i) clientIds.push_back(i + 1);
        for (ReplicaId r = 0; r < kReplicas; ++r) {
            ReplicaConfig rc;
            rc.id = r;
            rc.replicaCount = kReplicas;
            rc.maxFaulty = 1;
            rc.delta = c.delta;
            rc.cpInterval = 50;
            rc.expansionLimit = 5;
            replicas.push_back(std::make_unique<Replica>(
                rc, Keyring::forSimulation(scheme, SignerId::replica(r), kReplicas, clientIds),
                std::make_unique<KvStore>()));
        }
        clientTimers.resize(c.requests);
        accepted.resize(c.requests, false);
        for (std::uint32_t i = 0; i < c.requests; ++i) {
            ClientConfig cc;
            cc.id = clientIds[i];
            cc.homeReplica = static_cast<ReplicaId>(i);  // distinct coordinators
            cc.replicaCount = kReplicas;
            cc.maxFaulty = 1;
            cc.delta = c.delta;
            clients.push_back(std::make_unique<ClientSession>(
                cc, Keyring::forSimulation(scheme, SignerId::client(clientIds[i]), kReplicas,
                                           clientIds)));
            // Conflicting writes: everyone hits the same key.
            auto out = clients[i]->submit(
                KvOperation::write(toBytes("k"), toBytes("v" + std::to_string(i))).encoded());
            routeClientOutput(i, std::move(out));
        }
    }

    void routeClientOutput(std::uint32_t idx, ClientSession::Output&& out) {
        for (const auto& ob : out.messages)
            if (ob.dest.kind == Destination::Kind::Replica && !crashed[ob.dest.replica])
                pool[ob.dest.replica].push_back(ob.message);
        for (const auto& t : out.timers)
            clientTimers[idx].emplace(virtualNow + t.delay, t.token);
        if (out.accepted) accepted[idx] = true;
    }

    void routeReplicaOutput(ReplicaId r, StepOutput&& out) {
        for (const auto& t : out.timers)
            replicaTimers[r].emplace(virtualNow + t.delay, t.token);
        for (const auto& ob : out.messages) {
            if (ob.dest.kind == Destination::Kind::Client) {
                // Replies bypass scheduling; client behavior is not explored.
                for (std::uint32_t i = 0; i < clients.size(); ++i)
                    if (clientIds[i] == ob.dest.client) {
                        const auto* reply = std::get_if<Reply>(&ob.message);
                        if (reply) routeClientOutput(i, clients[i]->onReply(*reply));
                    }
            } else if (ob.dest.kind == Destination::Kind::Replica) {
                if (!crashed[ob.dest.replica]) pool[ob.dest.replica].push_back(ob.message);
            } else {
                for (ReplicaId d = 0; d < kReplicas; ++d)
                    if (d != r && !crashed[d]) pool[d].push_back(ob.message);
            }
        }
    }

    void deliver(ReplicaId r) {
        ProtocolMessage msg = std::move(pool[r].front());
        pool[r].pop_front();
        if (crashed[r]) return;
        routeReplicaOutput(r, replicas[r]->step(Replica::Event{std::move(msg)}));
    }

    void crash(ReplicaId r) {
        crashed[r] = true;
        crashUsed = true;
        pool[r].clear();
        replicaTimers[r].clear();
    }

    // Fires the earliest armed timer anywhere; returns false when none left.
    bool fireEarliestTimer() {
        Micros best = 0;
        int actor = -1;  // 0..3 replicas, 4+ clients
        for (ReplicaId r = 0; r < kReplicas; ++r) {
            if (crashed[r] || replicaTimers[r].empty()) continue;
            Micros t = replicaTimers[r].begin()->first;
            if (actor < 0 || t < best) {
                best = t;
                actor = static_cast<int>(r);
            }
        }
        for (std::uint32_t i = 0; i < clientTimers.size(); ++i) {
            if (clientTimers[i].empty()) continue;
            Micros t = clientTimers[i].begin()->first;
            if (actor < 0 || t < best) {
                best = t;
                actor = static_cast<int>(kReplicas + i);
            }
        }
        if (actor < 0) return false;
        virtualNow = best;
        if (actor < static_cast<int>(kReplicas)) {
            auto it = replicaTimers[actor].begin();
            std::uint64_t token = it->second;
            replicaTimers[actor].erase(it);
            routeReplicaOutput(static_cast<ReplicaId>(actor),
                               replicas[actor]->step(Replica::Event{Replica::TimerEvent{token}}));
        } else {
            std::uint32_t idx = actor - kReplicas;
            auto it = clientTimers[idx].begin();
            std::uint64_t token = it->second;
            clientTimers[idx].erase(it);
            routeClientOutput(idx, clients[idx]->onTimer(token));
        }
        return true;
    }

    bool allAccepted() const {
        for (bool a : accepted)
            if (!a) return false;
        return true;
    }
};

struct ScheduleOutcome {
    std::vector<size_t> optionCounts;
    std::vector<std::string> log;
    bool violation = false;
    std::string violationWhat;
    bool everyRequestCommitted = false;
    bool sawNoOp = false;
    std::string orderSig;
};

ScheduleOutcome runSchedule(const OracleConfig& cfg, const std::vector<size_t>& choices) {
    World w(cfg);
    ScheduleOutcome outcome;
    std::uint64_t steps = 0;
    size_t decision = 0;

    while (steps++ < cfg.maxStepsPerSchedule) {
        // Enumerate the current options: deliver any destination's head, or
        // crash one of the request coordinators.
        struct Option {
            bool isCrash;
            ReplicaId target;
        };
        std::vector<Option> options;
        for (ReplicaId r = 0; r < kReplicas; ++r)
            if (!w.crashed[r] && !w.pool[r].empty()) options.push_back({false, r});
        if (cfg.exploreCrashes && !w.crashUsed && decision < cfg.branchBound)
            for (std::uint32_t i = 0; i < cfg.requests; ++i)
                options.push_back({true, static_cast<ReplicaId>(i)});

        if (options.empty()) {
            if (w.allAccepted()) break;       // done
            if (!w.fireEarliestTimer()) break;  // truly quiescent
            continue;
        }

        size_t pick = 0;
        if (options.size() > 1 && decision < cfg.branchBound) {
            outcome.optionCounts.push_back(options.size());
            if (decision < choices.size()) pick = choices[decision] % options.size();
            ++decision;
        }
        const Option& opt = options[pick];
        if (opt.isCrash) {
            outcome.log.push_back("crash r" + std::to_string(opt.target));
            w.crash(opt.target);
        } else {
            outcome.log.push_back("deliver r" + std::to_string(opt.target));
            w.deliver(opt.target);
        }
    }

    // Safety checks over whatever state was reached (prefix-closed).
    std::map<SlotId, Bytes> canonical;
    std::uint64_t violations = 0;
    for (ReplicaId r = 0; r < kReplicas; ++r) {
        if (w.crashed[r]) continue;
        violations += w.replicas[r]->agreement().stats().invariantViolations;
        violations += w.replicas[r]->execution().stats().invariantViolations;
        for (const auto& [slot, rec] : w.replicas[r]->commitLog()) {
            Bytes bytes = rec.encoded();
            auto [it, inserted] = canonical.try_emplace(slot, bytes);
            if (!inserted && it->second != bytes) {
                outcome.violation = true;
                outcome.violationWhat = "commit record divergence at " + slotToString(slot);
            }
            if (rec.request.isNoOp()) outcome.sawNoOp = true;
        }
    }
    if (violations > 0) {
        outcome.violation = true;
        outcome.violationWhat = "engine invariant violation";
    }

    // Execution consistency: per-key applied write orders must be prefixes of
    // one another across correct replicas.
    std::vector<std::vector<std::pair<ClientId, Timestamp>>> orders;
    for (ReplicaId r = 0; r < kReplicas; ++r) {
        if (w.crashed[r]) continue;
        std::vector<std::pair<ClientId, Timestamp>> order;
        for (const auto& er : w.replicas[r]->executionLog())
            if (!er.duplicate && er.request.isRegular())
                order.push_back({er.request.client, er.request.timestamp});
        orders.push_back(std::move(order));
    }
    for (size_t i = 0; i < orders.size(); ++i)
        for (size_t j = i + 1; j < orders.size(); ++j) {
            const auto& a = orders[i].size() <= orders[j].size() ? orders[i] : orders[j];
            const auto& b = orders[i].size() <= orders[j].size() ? orders[j] : orders[i];
            if (!std::equal(a.begin(), a.end(), b.begin())) {
                outcome.violation = true;
                outcome.violationWhat = "conflicting execution orders";
            }
        }

    std::string sig;
    const std::vector<std::pair<ClientId, Timestamp>>* longest = nullptr;
    for (const auto& o : orders)
        if (!longest || o.size() > longest->size()) longest = &o;
    if (longest)
        for (const auto& [c, t] : *longest)
            sig += std::to_string(c) + ":" + std::to_string(t) + ";";
    outcome.orderSig = sig;

    std::uint32_t committed = 0;
    for (std::uint32_t i = 0; i < cfg.requests; ++i)
        if (w.accepted[i]) ++committed;
    outcome.everyRequestCommitted = committed == cfg.requests;
    return outcome;
}

}  // namespace

OracleReport exploreInterleavings(const OracleConfig& cfg) {
    OracleReport report;
    std::vector<std::vector<size_t>> stack{{}};
    while (!stack.empty()) {
        std::vector<size_t> prefix = std::move(stack.back());
        stack.pop_back();
        ScheduleOutcome outcome = runSchedule(cfg, prefix);
        ++report.schedulesExplored;
        if (outcome.violation) {
            ++report.violations;
            if (report.counterexample.empty()) report.counterexample = outcome.log;
        }
        if (outcome.everyRequestCommitted) ++report.committedOutcomes;
        if (outcome.sawNoOp) ++report.noOpOutcomes;
        if (!outcome.orderSig.empty()) report.executionOrders.insert(outcome.orderSig);

        if (prefix.size() < cfg.branchBound && outcome.optionCounts.size() > prefix.size()) {
            size_t n = outcome.optionCounts[prefix.size()];
            // Option 0 is the schedule just run; spawn the siblings.
            for (size_t i = 1; i < n; ++i) {
                std::vector<size_t> child = prefix;
                child.push_back(i);
                stack.push_back(std::move(child));
            }
        }
    }
    return report;
}

}  // namespace peerbft::sim
