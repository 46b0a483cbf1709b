#include "peerbft/sim/simnet.hpp"

#include <algorithm>
#include <queue>
#include <random>

#include "peerbft/app/kvstore.hpp"
#include "peerbft/sim/adversary.hpp"

namespace peerbft::sim {

namespace {

struct SimEvent {
    enum class Kind {
        DeliverToReplica,
        DeliverToClient,
        ReplicaTimer,
        ClientTimer,
        ClientStart,
        ReplicaReset,
        AdversaryTick,
    };

    Micros time = 0;
    std::uint64_t seq = 0;  // total order tiebreaker
    Kind kind = Kind::DeliverToReplica;
    std::uint32_t target = 0;  // replica id or client index
    std::uint32_t incarnation = 0;
    std::uint64_t token = 0;
    ProtocolMessage message;

    bool operator>(const SimEvent& other) const {
        if (time != other.time) return time > other.time;
        return seq > other.seq;
    }
};

struct SimClient {
    ClientId id = 0;
    std::uint32_t site = 0;
    std::unique_ptr<ClientSession> session;
    std::uint32_t submitted = 0;
    std::vector<ClientOp> ops;
};

class Simulation {
  public:
    explicit Simulation(const Scenario& sc) : sc_(sc), rng_(sc.seed), gen_(sc.workload, sc.seed) {
        scheme_ = makeTagScheme();
        buildActors();
    }

    SimResult run();

  private:
    void buildActors();
    std::unique_ptr<Replica> makeReplica(ReplicaId id);
    Keyring ringFor(SignerId id);
    void push(SimEvent ev) {
        ev.seq = ++eventSeq_;
        queue_.push(std::move(ev));
    }
    void scheduleToReplica(ReplicaId from, bool fromClient, std::uint32_t fromSite, ReplicaId to,
                           const ProtocolMessage& msg, Micros now);
    void scheduleToClient(ReplicaId from, ClientId client, const ProtocolMessage& msg,
                          Micros now);
    void dispatchReplicaOutput(ReplicaId r, StepOutput&& out, Micros now);
    void dispatchClientOutput(std::uint32_t clientIdx, ClientSession::Output&& out, Micros now);
    void clientSubmitNext(std::uint32_t clientIdx, Micros now);
    void handle(const SimEvent& ev);
    void note(Micros time, const std::string& actor, const std::string& kind, SlotId slot = {},
              std::string info = {});
    void noteLocalEvents(ReplicaId r, const StepOutput& out, Micros now);
    Micros jitterSample();
    std::uint32_t siteOf(ClientId id) const;

    const Scenario& sc_;
    std::mt19937_64 rng_;
    WorkloadGenerator gen_;
    std::shared_ptr<const SignatureScheme> scheme_;

    std::vector<std::unique_ptr<Replica>> replicas_;
    std::vector<std::unique_ptr<AdversaryShim>> shims_;  // null = honest
    std::vector<std::uint32_t> incarnation_;
    std::vector<SimClient> clients_;
    std::map<ClientId, std::uint32_t> clientIndex_;
    std::map<ClientId, Timestamp> colludingTs_;
    std::vector<ClientId> allClientIds_;

    std::priority_queue<SimEvent, std::vector<SimEvent>, std::greater<SimEvent>> queue_;
    std::uint64_t eventSeq_ = 0;
    Micros now_ = 0;
    SimResult result_;
};

std::uint32_t Simulation::siteOf(ClientId id) const {
    auto it = clientIndex_.find(id);
    if (it != clientIndex_.end()) return clients_[it->second].site;
    return 0;
}

Keyring Simulation::ringFor(SignerId id) {
    return Keyring::forSimulation(scheme_, id, sc_.replicas, allClientIds_);
}

std::unique_ptr<Replica> Simulation::makeReplica(ReplicaId id) {
    ReplicaConfig cfg;
    cfg.id = id;
    cfg.replicaCount = sc_.replicas;
    cfg.maxFaulty = sc_.maxFaulty;
    cfg.delta = sc_.delta;
    cfg.cpInterval = sc_.cpInterval;
    cfg.expansionLimit = sc_.expansionLimit;
    cfg.batchLimit = sc_.batchLimit;
    for (ReplicaId peer = 0; peer < sc_.replicas; ++peer)
        if (peer != id) cfg.latencyHints[peer] = sc_.replicaDelay(id, peer);
    return std::make_unique<Replica>(cfg, ringFor(SignerId::replica(id)),
                                     std::make_unique<KvStore>());
}

void Simulation::buildActors() {
    // Client identities must be known up front so every keyring can verify
    // them; colluding clients of adversaries included.
    std::uint32_t activeSites =
        sc_.workload.activeSites == 0 ? sc_.siteCount() : sc_.workload.activeSites;
    for (std::uint32_t site = 0; site < activeSites; ++site)
        for (std::uint32_t i = 0; i < sc_.workload.clientsPerSite; ++i)
            allClientIds_.push_back(site * 100 + i + 1);
    for (const auto& a : sc_.adversaries)
        if (a.behavior == Behavior::InflateDeps)
            allClientIds_.push_back(AdversaryShim::colludingClient(a.replica));

    for (ReplicaId r = 0; r < sc_.replicas; ++r) {
        replicas_.push_back(makeReplica(r));
        shims_.push_back(nullptr);
        incarnation_.push_back(0);
    }
    for (const auto& a : sc_.adversaries) {
        if (a.behavior == Behavior::Honest) continue;
        shims_[a.replica] = std::make_unique<AdversaryShim>(
            a, replicas_[a.replica]->config(), ringFor(SignerId::replica(a.replica)),
            sc_.expansionLimit);
        if (a.behavior == Behavior::InflateDeps)
            push({sc_.delta, 0, SimEvent::Kind::AdversaryTick, a.replica, 0, 0, {}});
    }

    std::uint32_t idx = 0;
    for (std::uint32_t site = 0; site < activeSites; ++site) {
        for (std::uint32_t i = 0; i < sc_.workload.clientsPerSite; ++i) {
            SimClient c;
            c.id = site * 100 + i + 1;
            c.site = site;
            ClientConfig ccfg;
            ccfg.id = c.id;
            ccfg.homeReplica = static_cast<ReplicaId>(site % sc_.replicas);
            ccfg.replicaCount = sc_.replicas;
            ccfg.maxFaulty = sc_.maxFaulty;
            ccfg.delta = sc_.delta;
            ccfg.retransmitEnabled = sc_.clientRetransmit;
            c.session = std::make_unique<ClientSession>(ccfg, ringFor(SignerId::client(c.id)));
            clientIndex_[c.id] = idx;
            Micros start = 1000 + idx * sc_.clientStartStagger;
            clients_.push_back(std::move(c));
            push({start, 0, SimEvent::Kind::ClientStart, idx, 0, 0, {}});
            ++idx;
        }
    }

    if (sc_.resetReplicaAt)
        push({*sc_.resetReplicaAt, 0, SimEvent::Kind::ReplicaReset, sc_.resetReplica, 0, 0, {}});
}

Micros Simulation::jitterSample() {
    if (sc_.jitter <= 0) return 0;
    return static_cast<Micros>(rng_() % static_cast<std::uint64_t>(sc_.jitter + 1));
}

void Simulation::note(Micros time, const std::string& actor, const std::string& kind, SlotId slot,
                      std::string info) {
    result_.trace.push_back({time, actor, kind, slot, std::move(info)});
}

void Simulation::scheduleToReplica(ReplicaId from, bool fromClient, std::uint32_t fromSite,
                                   ReplicaId to, const ProtocolMessage& msg, Micros now) {
    ++result_.sentByKind[msgTagName(messageTag(msg))];
    if (sc_.dropProb > 0 &&
        std::generate_canonical<double, 32>(rng_) < sc_.dropProb) {
        ++result_.droppedMessages;
        return;
    }
    Micros delay =
        (fromClient ? sc_.clientDelay(fromSite, to) : sc_.replicaDelay(from, to)) + jitterSample();
    push({now + delay, 0, SimEvent::Kind::DeliverToReplica, to, 0, 0, msg});
    if (sc_.dupProb > 0 && std::generate_canonical<double, 32>(rng_) < sc_.dupProb)
        push({now + delay + 100, 0, SimEvent::Kind::DeliverToReplica, to, 0, 0, msg});
    if (sc_.traceMessages)
        note(now, fromClient ? "c" + std::to_string(fromSite) : "r" + std::to_string(from),
             std::string("send:") + msgTagName(messageTag(msg)),
             messageSlot(msg).value_or(SlotId{}), "to r" + std::to_string(to));
}

void Simulation::scheduleToClient(ReplicaId from, ClientId client, const ProtocolMessage& msg,
                                  Micros now) {
    auto it = clientIndex_.find(client);
    if (it == clientIndex_.end()) return;  // colluding clients ignore replies
    ++result_.sentByKind[msgTagName(messageTag(msg))];
    Micros delay = sc_.clientDelay(clients_[it->second].site, from) + jitterSample();
    push({now + delay, 0, SimEvent::Kind::DeliverToClient, it->second, 0, 0, msg});
}

void Simulation::noteLocalEvents(ReplicaId r, const StepOutput& out, Micros now) {
    std::string actor = "r" + std::to_string(r);
    for (const auto& ev : out.events) {
        switch (ev.kind) {
            case LocalEvent::Kind::Proposed:
                note(now, actor, "propose", ev.slot,
                     "F=" + ev.note + " req=" + hexString(ByteSpan(ev.digest.bytes.data(), 4)));
                break;
            case LocalEvent::Kind::Committed: {
                const char* path = ev.path == CommitPath::FastPath       ? "fast"
                                   : ev.path == CommitPath::Reconciliation ? "reconciliation"
                                   : ev.path == CommitPath::ViewChange     ? "viewchange"
                                                                           : "recovery";
                note(now, actor, "commit", ev.slot,
                     std::string(path) + " view=" + std::to_string(ev.view) + " rec=" +
                         hexString(ByteSpan(ev.digest.bytes.data(), 4)));
                break;
            }
            case LocalEvent::Kind::Executed:
                if (sc_.traceMessages)
                    note(now, actor, ev.duplicate ? "execute-dup" : "execute", ev.slot, "");
                break;
            case LocalEvent::Kind::UnblockExec:
                note(now, actor, "unblock-exec", ev.slot, "");
                break;
            case LocalEvent::Kind::CheckpointTaken:
                note(now, actor, "checkpoint", {}, "seq=" + std::to_string(ev.seq));
                break;
            case LocalEvent::Kind::CheckpointStable:
                note(now, actor, "checkpoint-stable", {}, "seq=" + std::to_string(ev.seq));
                break;
            case LocalEvent::Kind::CheckpointApplied:
                note(now, actor, "checkpoint-applied", {}, "seq=" + std::to_string(ev.seq));
                break;
            case LocalEvent::Kind::ViewChangeStarted:
                note(now, actor, "view-change", ev.slot, "view=" + std::to_string(ev.view));
                break;
            case LocalEvent::Kind::NewViewInstalled:
                note(now, actor, "new-view", ev.slot, "view=" + std::to_string(ev.view));
                break;
            case LocalEvent::Kind::InvariantViolation:
                note(now, actor, "invariant-violation", ev.slot, ev.note);
                break;
        }
    }
}

void Simulation::dispatchReplicaOutput(ReplicaId r, StepOutput&& out, Micros now) {
    noteLocalEvents(r, out, now);
    for (const auto& t : out.timers)
        push({now + t.delay, 0, SimEvent::Kind::ReplicaTimer, r, incarnation_[r], t.token, {}});

    for (const auto& ob : out.messages) {
        std::vector<ReplicaId> dests;
        if (ob.dest.kind == Destination::Kind::AllReplicas) {
            for (ReplicaId d = 0; d < sc_.replicas; ++d)
                if (d != r) dests.push_back(d);
        } else if (ob.dest.kind == Destination::Kind::Replica) {
            dests.push_back(ob.dest.replica);
        }

        if (shims_[r]) {
            for (auto& wire : shims_[r]->transform(ob, now, dests)) {
                if (wire.dest.kind == Destination::Kind::Client)
                    scheduleToClient(r, wire.dest.client, wire.message, now);
                else
                    scheduleToReplica(r, false, 0, wire.dest.replica, wire.message, now);
            }
        } else if (ob.dest.kind == Destination::Kind::Client) {
            scheduleToClient(r, ob.dest.client, ob.message, now);
        } else {
            for (ReplicaId d : dests) scheduleToReplica(r, false, 0, d, ob.message, now);
        }
    }
}

void Simulation::dispatchClientOutput(std::uint32_t clientIdx, ClientSession::Output&& out,
                                      Micros now) {
    SimClient& c = clients_[clientIdx];
    for (const auto& t : out.timers)
        push({now + t.delay, 0, SimEvent::Kind::ClientTimer, clientIdx, 0, t.token, {}});
    for (const auto& ob : out.messages) {
        if (ob.dest.kind != Destination::Kind::Replica) continue;
        scheduleToReplica(0, true, c.site, ob.dest.replica, ob.message, now);
    }
    if (out.accepted) {
        for (auto it = c.ops.rbegin(); it != c.ops.rend(); ++it) {
            if (it->timestamp == out.accepted->timestamp) {
                it->accepted = true;
                it->acceptTime = now;
                it->result = out.accepted->result;
                break;
            }
        }
        note(now, "c" + std::to_string(c.id), "accept", {},
             "ts=" + std::to_string(out.accepted->timestamp));
        if (sc_.workload.thinkTime > 0)
            push({now + sc_.workload.thinkTime, 0, SimEvent::Kind::ClientStart, clientIdx, 0, 0,
                  {}});
        else
            clientSubmitNext(clientIdx, now);
    }
}

void Simulation::clientSubmitNext(std::uint32_t clientIdx, Micros now) {
    SimClient& c = clients_[clientIdx];
    if (c.submitted >= sc_.workload.requestsPerClient) return;
    KvOperation op = gen_.operation(c.id, c.submitted);
    ++c.submitted;
    auto out = c.session->submit(op.encoded());
    ClientOp rec;
    rec.timestamp = c.session->nextTimestamp() - 1;
    rec.operation = op;
    rec.submitTime = now;
    c.ops.push_back(rec);
    note(now, "c" + std::to_string(c.id), "submit", {}, "ts=" + std::to_string(rec.timestamp));
    dispatchClientOutput(clientIdx, std::move(out), now);
}

void Simulation::handle(const SimEvent& ev) {
    switch (ev.kind) {
        case SimEvent::Kind::DeliverToReplica: {
            ReplicaId r = ev.target;
            if (shims_[r] && shims_[r]->crashedAt(now_)) {
                ++result_.droppedMessages;
                return;
            }
            ++result_.deliveredMessages;
            StepOutput out = replicas_[r]->step(Replica::Event{ev.message});
            if (shims_[r]) shims_[r]->noteOwnCounter(replicas_[r]->agreement().nextOwnCounter());
            dispatchReplicaOutput(r, std::move(out), now_);
            break;
        }
        case SimEvent::Kind::ReplicaTimer: {
            ReplicaId r = ev.target;
            if (ev.incarnation != incarnation_[r]) return;  // stale incarnation
            if (shims_[r] && shims_[r]->crashedAt(now_)) return;
            StepOutput out = replicas_[r]->step(Replica::Event{Replica::TimerEvent{ev.token}});
            dispatchReplicaOutput(r, std::move(out), now_);
            break;
        }
        case SimEvent::Kind::DeliverToClient: {
            const auto* reply = std::get_if<Reply>(&ev.message);
            if (!reply) return;
            auto out = clients_[ev.target].session->onReply(*reply);
            dispatchClientOutput(ev.target, std::move(out), now_);
            break;
        }
        case SimEvent::Kind::ClientTimer: {
            auto out = clients_[ev.target].session->onTimer(ev.token);
            dispatchClientOutput(ev.target, std::move(out), now_);
            break;
        }
        case SimEvent::Kind::ClientStart:
            clientSubmitNext(ev.target, now_);
            break;
        case SimEvent::Kind::ReplicaReset: {
            ReplicaId r = ev.target;
            replicas_[r] = makeReplica(r);
            ++incarnation_[r];
            note(now_, "r" + std::to_string(r), "reset", {}, "");
            break;
        }
        case SimEvent::Kind::AdversaryTick: {
            ReplicaId r = ev.target;
            if (!shims_[r] || !shims_[r]->wantsSelfTraffic()) return;
            bool active = false;
            for (const auto& c : clients_)
                if (c.submitted < sc_.workload.requestsPerClient || !c.session->idle())
                    active = true;
            if (!active) return;  // workload drained; stop injecting
            ClientId cid = AdversaryShim::colludingClient(r);
            Timestamp ts = ++colludingTs_[cid];
            Keyring ring = ringFor(SignerId::client(cid));
            Request req = makeSignedRequest(
                ring, cid, ts, KvOperation::write(toBytes("shared"), toBytes("x")).encoded());
            StepOutput out = replicas_[r]->step(Replica::Event{ProtocolMessage{ClientSubmit{req}}});
            shims_[r]->noteOwnCounter(replicas_[r]->agreement().nextOwnCounter());
            dispatchReplicaOutput(r, std::move(out), now_);
            push({now_ + sc_.delta / 2, 0, SimEvent::Kind::AdversaryTick, r, 0, 0, {}});
            break;
        }
    }
}

SimResult Simulation::run() {
    constexpr std::uint64_t kMaxEvents = 60'000'000;
    std::uint64_t handled = 0;
    while (!queue_.empty()) {
        SimEvent ev = queue_.top();
        queue_.pop();
        if (ev.time > sc_.horizon) {
            result_.horizonReached = true;
            break;
        }
        now_ = ev.time;
        handle(ev);
        if (++handled > kMaxEvents) {
            result_.horizonReached = true;
            break;
        }
    }
    result_.endTime = now_;

    for (ReplicaId r = 0; r < sc_.replicas; ++r) {
        ReplicaResult rr;
        rr.id = r;
        rr.correct = !sc_.isFaulty(r);
        rr.stateDigest = replicas_[r]->stateDigest();
        rr.commitLog = replicas_[r]->commitLog();
        rr.executionLog = replicas_[r]->executionLog();
        rr.checkpointLog = replicas_[r]->checkpoints().log();
        rr.agreementStats = replicas_[r]->agreement().stats();
        rr.execStats = replicas_[r]->execution().stats();
        rr.invalidSignatures = replicas_[r]->stats().invalidSignatures;
        result_.replicas.push_back(std::move(rr));
    }
    for (const auto& c : clients_) {
        ClientResult cr;
        cr.id = c.id;
        cr.site = c.site;
        cr.ops = c.ops;
        result_.clients.push_back(std::move(cr));
    }
    return result_;
}

}  // namespace

SimResult runSimulation(const Scenario& scenario) {
    Simulation sim(scenario);
    return sim.run();
}

Micros analyticFastPathLatency(const Scenario& sc, std::uint32_t site) {
    ReplicaId coord = static_cast<ReplicaId>(site % sc.replicas);
    std::uint32_t f = sc.maxFaulty;

    // The coordinator picks the 2f followers with the lowest one-way delay,
    // ties by id; mirrors the replica's quorum selection.
    std::vector<std::pair<Micros, ReplicaId>> byDelay;
    for (ReplicaId r = 0; r < sc.replicas; ++r)
        if (r != coord) byDelay.push_back({sc.replicaDelay(coord, r), r});
    std::sort(byDelay.begin(), byDelay.end());
    std::vector<ReplicaId> quorum;
    for (std::uint32_t i = 0; i < 2 * f; ++i) quorum.push_back(byDelay[i].second);

    Micros submitArrive = sc.clientDelay(site, coord);
    auto dpAt = [&](ReplicaId r) {
        return r == coord ? submitArrive : submitArrive + sc.replicaDelay(coord, r);
    };
    auto verifiedAt = [&](ReplicaId r) {
        Micros t = dpAt(r);
        for (ReplicaId q : quorum) {
            Micros dvArrive = dpAt(q) + (q == r ? 0 : sc.replicaDelay(q, r));
            t = std::max(t, dvArrive);
        }
        return t;
    };
    auto commitAt = [&](ReplicaId r) {
        std::vector<Micros> dcArrivals;
        for (ReplicaId s = 0; s < sc.replicas; ++s)
            dcArrivals.push_back(verifiedAt(s) + (s == r ? 0 : sc.replicaDelay(s, r)));
        std::sort(dcArrivals.begin(), dcArrivals.end());
        return dcArrivals[2 * f];  // the (2f+1)-th DepCommit completes the quorum
    };
    std::vector<Micros> replies;
    for (ReplicaId r = 0; r < sc.replicas; ++r)
        replies.push_back(commitAt(r) + sc.clientDelay(site, r));
    std::sort(replies.begin(), replies.end());
    return replies[f];  // accepted at the (f+1)-th matching reply
}

}  // namespace peerbft::sim
