#include "peerbft/replica.hpp"

namespace peerbft {

namespace {
constexpr int kBatchFlushTimer = 1;
constexpr int kCatchupTimer = 2;
}  // namespace

Replica::Replica(const ReplicaConfig& cfg, Keyring ring, std::unique_ptr<Application> app)
    : cfg_(cfg),
      ring_(std::move(ring)),
      app_(std::move(app)),
      index_(*app_),
      engine_(cfg_, ring_, index_, tokenCounter_),
      exec_(cfg_.replicaCount, cfg_.expansionLimit),
      checkpoints_(cfg_, ring_) {
    cfg_.validate();
}

StepOutput Replica::step(const Event& event) {
    StepOutput out;
    EngineOutput eo;
    if (const auto* msg = std::get_if<ProtocolMessage>(&event)) {
        if (!verifyMessage(ring_, *msg)) {
            ++stats_.invalidSignatures;  // discarded before any state change
            return out;
        }
        handleMessage(*msg, eo, out);
    } else if (const auto* timer = std::get_if<TimerEvent>(&event)) {
        handleTimer(timer->token, eo);
    } else {
        ++stats_.malformedEvents;
        return out;
    }
    pump(eo, out);
    return out;
}

void Replica::handleMessage(const ProtocolMessage& msg, EngineOutput& eo, StepOutput& out) {
    (void)out;
    std::visit(
        [&](const auto& m) {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, DepPropose>)
                engine_.onDepPropose(m, eo);
            else if constexpr (std::is_same_v<M, DepVerify>)
                engine_.onDepVerify(m, eo);
            else if constexpr (std::is_same_v<M, DepCommit>)
                engine_.onDepCommit(m, eo);
            else if constexpr (std::is_same_v<M, Prepare>)
                engine_.onPrepare(m, eo);
            else if constexpr (std::is_same_v<M, Commit>)
                engine_.onCommit(m, eo);
            else if constexpr (std::is_same_v<M, ViewChange>)
                engine_.onViewChange(m, eo);
            else if constexpr (std::is_same_v<M, NewView>)
                engine_.onNewView(m, eo);
            else if constexpr (std::is_same_v<M, QueryExec>)
                engine_.onQueryExec(m, eo);
            else if constexpr (std::is_same_v<M, ExecInfo>)
                engine_.onExecInfo(m, eo);
            else if constexpr (std::is_same_v<M, ClientSubmit>)
                handleClientRequest(m.request, eo);
            else if constexpr (std::is_same_v<M, CheckpointMsg>)
                applyCheckpointOutcome(checkpoints_.onCheckpointMsg(m, eo), eo);
            else if constexpr (std::is_same_v<M, CheckpointFetchReq>)
                checkpoints_.onFetchReq(m, eo);
            else if constexpr (std::is_same_v<M, CheckpointFetchResp>) {
                if (auto barrier = checkpoints_.onFetchResp(m, *app_)) {
                    exec_.markRestored(*barrier);
                    engine_.applyRestoredBarrier(*barrier, eo);
                    LocalEvent ev;
                    ev.kind = LocalEvent::Kind::CheckpointApplied;
                    ev.seq = checkpoints_.stableSeq();
                    ev.digest = app_->stateDigest();
                    eo.events.push_back(ev);
                }
            }
            // Reply messages are for clients; a replica drops them.
        },
        msg);
}

void Replica::handleClientRequest(const Request& request, EngineOutput& eo) {
    if (!request.isRegular()) {
        ++stats_.malformedEvents;
        return;
    }
    // Fill request-content holes regardless of duplication.
    engine_.onRequestContent(request, eo);

    if (engine_.requestCommitted(request.client, request.timestamp)) {
        auto it = lastResult_.find(request.client);
        if (it != lastResult_.end() && it->second.first == request.timestamp) {
            Reply reply;
            reply.slot = SlotId{cfg_.id, 0};
            reply.sender_ = cfg_.id;
            reply.client = request.client;
            reply.clientTimestamp = request.timestamp;
            reply.result = it->second.second;
            signMessage(ring_, reply);
            eo.messages.push_back({reply, Destination::toClient(request.client)});
        }
        return;
    }
    if (index_.knownLive(request.client, request.timestamp)) return;  // already in flight

    if (cfg_.batchLimit > 1) {
        pendingBatch_.push_back(request);
        if (pendingBatch_.size() >= cfg_.batchLimit) {
            flushBatch(eo);
        } else if (!batchTimerArmed_) {
            batchTimerArmed_ = true;
            armReplicaTimer(kBatchFlushTimer, cfg_.delta, eo);
        }
        return;
    }
    proposeOrQueue(request, eo);
}

void Replica::proposeOrQueue(const Request& request, EngineOutput& eo) {
    if (!engine_.proposeRequest(request, eo)) backpressured_.push_back(request);
}

void Replica::flushBatch(EngineOutput& eo) {
    while (!pendingBatch_.empty()) {
        size_t n = std::min<size_t>(pendingBatch_.size(), cfg_.batchLimit);
        std::vector<Request> members(pendingBatch_.begin(), pendingBatch_.begin() + n);
        pendingBatch_.erase(pendingBatch_.begin(), pendingBatch_.begin() + n);
        Request req = members.size() == 1 ? members[0] : Request::batch(std::move(members));
        proposeOrQueue(req, eo);
    }
}

void Replica::handleTimer(std::uint64_t token, EngineOutput& eo) {
    if (engine_.onTimer(token, eo)) return;
    auto it = replicaTimers_.find(token);
    if (it == replicaTimers_.end()) return;  // cancelled or stale
    int kind = it->second;
    replicaTimers_.erase(it);
    switch (kind) {
        case kBatchFlushTimer:
            batchTimerArmed_ = false;
            flushBatch(eo);
            break;
        case kCatchupTimer:
            catchupTimerArmed_ = false;
            if (checkpoints_.behind()) {
                checkpoints_.requestFetch(eo);
                catchupTimerArmed_ = true;
                armReplicaTimer(kCatchupTimer, cfg_.queryExecTimeout(), eo);
            }
            break;
    }
}

void Replica::armReplicaTimer(int kind, Micros delay, EngineOutput& eo) {
    std::uint64_t token = ++tokenCounter_;
    replicaTimers_[token] = kind;
    eo.timers.push_back({token, delay});
}

void Replica::applyCheckpointOutcome(const CheckpointOutcome& outcome, EngineOutput& eo) {
    if (outcome.stable) {
        engine_.onStableCheckpoint(outcome.stable->first, eo);
        // A slid window may admit queued proposals again.
        while (!backpressured_.empty()) {
            Request next = backpressured_.front();
            if (!engine_.proposeRequest(next, eo)) break;
            backpressured_.pop_front();
        }
    }
    if (outcome.externalStable && !catchupTimerArmed_) {
        catchupTimerArmed_ = true;
        armReplicaTimer(kCatchupTimer, cfg_.queryExecTimeout(), eo);
    }
}

void Replica::pump(EngineOutput& eo, StepOutput& out) {
    // Commits feed execution; execution may take checkpoints whose stability
    // garbage-collects agreement state, which can release more commits.
    while (!eo.commits.empty()) {
        std::vector<CommittedSlot> commits = std::move(eo.commits);
        eo.commits.clear();
        for (const auto& c : commits) {
            commitLog_[c.record.slot] = c.record;
            exec_.ingest(c.record);
        }

        ExecutionScheduler::Hooks hooks;
        hooks.apply = [&](const Request& r) { return app_->execute(r); };
        // The snapshot must be taken at the barrier point, synchronously:
        // the same scheduling pass may go on to execute post-barrier slots.
        hooks.checkpoint = [&](const CheckpointPoint& p) {
            applyCheckpointOutcome(checkpoints_.takeCheckpoint(p, *app_, eo), eo);
        };
        hooks.unblocked = [&](const SlotId& root) {
            LocalEvent ev;
            ev.kind = LocalEvent::Kind::UnblockExec;
            ev.slot = root;
            eo.events.push_back(ev);
        };
        hooks.executed = [&](const ExecutedRequest& er) {
            executionLog_.push_back(er);
            out.executed.push_back(er);
            LocalEvent ev;
            ev.kind = LocalEvent::Kind::Executed;
            ev.slot = er.slot;
            ev.client = er.request.client;
            ev.timestamp = er.request.timestamp;
            ev.duplicate = er.duplicate;
            eo.events.push_back(ev);
            if (er.request.isRegular() && er.result && !er.duplicate) {
                lastResult_[er.request.client] = {er.request.timestamp, *er.result};
                Reply reply;
                reply.slot = er.slot;
                reply.sender_ = cfg_.id;
                reply.client = er.request.client;
                reply.clientTimestamp = er.request.timestamp;
                reply.result = *er.result;
                signMessage(ring_, reply);
                eo.messages.push_back({reply, Destination::toClient(er.request.client)});
            }
        };
        exec_.schedule(hooks);
    }

    // Slots the scheduler still waits on get queried after 4 delta; this is
    // how a replica that missed a commit entirely learns the result.
    engine_.noteExecutionBlockers(exec_.blockedOn(), eo);

    out.messages.insert(out.messages.end(), eo.messages.begin(), eo.messages.end());
    out.timers.insert(out.timers.end(), eo.timers.begin(), eo.timers.end());
    out.events.insert(out.events.end(), eo.events.begin(), eo.events.end());
    eo.messages.clear();
    eo.timers.clear();
    eo.events.clear();
}

}  // namespace peerbft
