#pragma once

#include "peerbft/agreement.hpp"
#include "peerbft/app/application.hpp"
#include "peerbft/execution.hpp"

namespace peerbft {

struct CheckpointRecord {
    std::uint64_t seq = 0;
    DependencySet barrier;
    Digest stateHash;
    Bytes snapshot;
};

// What a checkpoint-message delivery changed.
struct CheckpointOutcome {
    // A checkpoint of ours became stable: garbage collection may proceed.
    std::optional<std::pair<DependencySet, std::uint64_t>> stable;
    // 2f+1 votes exist for a checkpoint we have not produced: we are behind.
    std::optional<std::uint64_t> externalStable;
};

// Checkpoint creation and stability tracking, garbage-collection triggers,
// and state transfer to lagging replicas.
class CheckpointManager {
  public:
    CheckpointManager(const ReplicaConfig& cfg, const Keyring& ring)
        : cfg_(cfg), ring_(&ring) {}

    // Execution reached a checkpoint point: snapshot and broadcast the vote.
    CheckpointOutcome takeCheckpoint(const CheckpointPoint& point, Application& app,
                                     EngineOutput& out);

    CheckpointOutcome onCheckpointMsg(const CheckpointMsg& msg, EngineOutput& out);

    void onFetchReq(const CheckpointFetchReq& msg, EngineOutput& out);

    // Verifies and applies a fetched checkpoint. Returns the restored barrier
    // when the application state was replaced.
    std::optional<DependencySet> onFetchResp(const CheckpointFetchResp& msg, Application& app);

    // True while someone else's stable checkpoint is ahead of our state.
    bool behind() const { return pendingExternalSeq_ > localSeq_; }

    // Asks the next provider (round-robin) for the stable checkpoint.
    void requestFetch(EngineOutput& out);

    const DependencySet& stableBarrier() const { return stableBarrier_; }
    std::uint64_t stableSeq() const { return stableSeq_; }
    std::uint64_t localSeq() const { return localSeq_; }  // checkpoints taken or applied
    const std::vector<CheckpointRecord>& log() const { return log_; }

  private:
    struct VoteBucket {
        CheckpointMsg exemplar;
        std::map<ReplicaId, CheckpointMsg> votes;
    };

    Digest voteKey(const CheckpointMsg& msg) const;
    CheckpointOutcome checkStability(std::uint64_t seq, EngineOutput& out);

    ReplicaConfig cfg_;
    const Keyring* ring_;

    std::uint64_t nextSeq_ = 0;
    std::uint64_t localSeq_ = 0;   // count of checkpoints taken or applied
    std::uint64_t stableSeq_ = 0;  // seq of the latest stable checkpoint, 0 = none
    DependencySet stableBarrier_;
    std::map<std::uint64_t, CheckpointRecord> records_;  // by seq, pruned on stability
    std::map<std::uint64_t, std::map<Digest, VoteBucket>> votes_;
    std::map<std::uint64_t, std::set<ReplicaId>> voted_;
    std::vector<CheckpointMsg> stableVotes_;  // the serving certificate
    std::uint64_t pendingExternalSeq_ = 0;    // newest externally-stable seq seen
    ReplicaId nextProvider_ = 0;
    std::vector<CheckpointRecord> log_;  // (seq, barrier, stateHash); snapshot omitted
};

}  // namespace peerbft
