#pragma once

#include <deque>
#include <memory>

#include "peerbft/checkpoint.hpp"

namespace peerbft {

struct StepOutput {
    std::vector<Outbound> messages;
    std::vector<TimerRequest> timers;
    std::vector<LocalEvent> events;
    std::vector<ExecutedRequest> executed;
};

struct ReplicaStats {
    std::uint64_t invalidSignatures = 0;
    std::uint64_t malformedEvents = 0;
};

// One deterministic event loop wiring agreement -> execution -> checkpointing
// -> application, plus reply emission. Strictly single-threaded: events are
// consumed one at a time and every effect is returned as data.
class Replica {
  public:
    struct TimerEvent {
        std::uint64_t token = 0;
    };
    using Event = std::variant<ProtocolMessage, TimerEvent>;

    Replica(const ReplicaConfig& cfg, Keyring ring, std::unique_ptr<Application> app);

    // Engine and index hold pointers into this object; it must stay put.
    Replica(const Replica&) = delete;
    Replica& operator=(const Replica&) = delete;

    StepOutput step(const Event& event);

    const ReplicaConfig& config() const { return cfg_; }
    const AgreementEngine& agreement() const { return engine_; }
    const ExecutionScheduler& execution() const { return exec_; }
    const CheckpointManager& checkpoints() const { return checkpoints_; }
    const Application& app() const { return *app_; }
    Digest stateDigest() const { return app_->stateDigest(); }
    const std::map<SlotId, CommitRecord>& commitLog() const { return commitLog_; }
    const std::vector<ExecutedRequest>& executionLog() const { return executionLog_; }
    const ReplicaStats& stats() const { return stats_; }
    size_t queuedRequests() const { return backpressured_.size() + pendingBatch_.size(); }

  private:
    void handleMessage(const ProtocolMessage& msg, EngineOutput& eo, StepOutput& out);
    void handleClientRequest(const Request& request, EngineOutput& eo);
    void handleTimer(std::uint64_t token, EngineOutput& eo);
    void flushBatch(EngineOutput& eo);
    void proposeOrQueue(const Request& request, EngineOutput& eo);
    // Ingests commits, runs the scheduler, emits replies, takes checkpoints
    // and reacts to stability, until nothing new appears.
    void pump(EngineOutput& eo, StepOutput& out);
    void applyCheckpointOutcome(const CheckpointOutcome& outcome, EngineOutput& eo);
    void armReplicaTimer(int kind, Micros delay, EngineOutput& eo);

    ReplicaConfig cfg_;
    Keyring ring_;
    std::unique_ptr<Application> app_;
    RequestIndex index_;
    std::uint64_t tokenCounter_ = 0;
    AgreementEngine engine_;
    ExecutionScheduler exec_;
    CheckpointManager checkpoints_;

    std::deque<Request> pendingBatch_;       // batching queue (batchLimit > 1)
    std::deque<Request> backpressured_;      // ordering window was full
    bool batchTimerArmed_ = false;
    bool catchupTimerArmed_ = false;
    std::map<std::uint64_t, int> replicaTimers_;  // token -> kind
    std::map<ClientId, std::pair<Timestamp, Bytes>> lastResult_;  // re-reply cache

    std::map<SlotId, CommitRecord> commitLog_;
    std::vector<ExecutedRequest> executionLog_;
    ReplicaStats stats_;
};

}  // namespace peerbft
