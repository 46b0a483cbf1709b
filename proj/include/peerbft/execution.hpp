#pragma once

#include <functional>
#include <map>
#include <set>

#include "peerbft/agreement.hpp"

namespace peerbft {

// A committed checkpoint action about to fire: the slots carrying checkpoint
// requests in the executed component and the exact barrier they cover.
struct CheckpointPoint {
    std::vector<SlotId> cpSlots;
    DependencySet barrier;
};

struct ExecutedRequest {
    SlotId slot;
    Request request;              // batch members reported individually
    std::optional<Bytes> result;  // nullopt: duplicate, no-op or checkpoint
    bool duplicate = false;
};

struct ExecutionStats {
    std::uint64_t executedSlots = 0;
    std::uint64_t unblockExecutions = 0;
    std::uint64_t expandedHighWater = 0;  // largest dependency closure seen
    std::uint64_t invariantViolations = 0;
};

// Deterministic scheduler turning commit records into an execution order:
// dependency graph expansion bounded to a window of k slots per coordinator,
// strongly-connected-component execution in inverse topological order, and
// the unblock case for chains that leave the window.
class ExecutionScheduler {
  public:
    struct Hooks {
        // Applies one Regular request; nullopt marks a filtered duplicate.
        std::function<std::optional<Bytes>(const Request&)> apply;
        // Fires once per merged checkpoint action, after the barrier executed.
        std::function<void(const CheckpointPoint&)> checkpoint;
        std::function<void(const ExecutedRequest&)> executed;
        std::function<void(const SlotId& root)> unblocked;
    };

    ExecutionScheduler(std::uint32_t replicaCount, std::uint64_t expansionLimit)
        : replicaCount_(replicaCount), k_(expansionLimit) {}

    void ingest(const CommitRecord& record);
    void schedule(const Hooks& hooks);

    // After state transfer: everything the barrier covers counts as executed.
    void markRestored(const DependencySet& barrier);

    bool isExecuted(const SlotId& slot) const;
    std::uint64_t expOf(ReplicaId coordinator) const;
    bool inWindow(const SlotId& slot) const;
    size_t pendingCount() const { return pending_.size(); }
    const ExecutionStats& stats() const { return stats_; }

    // In-window slots that pending records depend on but that are not locally
    // committed; candidates for QueryExec recovery.
    std::set<SlotId> blockedOn() const;

  private:
    struct Closure {
        std::vector<SlotId> nodes;  // sorted
        std::uint64_t ignoredOutOfWindow = 0;
    };

    // Full closure; fails when it reaches an uncommitted or out-of-window
    // slot. The exp variant ignores out-of-window dependencies instead.
    std::optional<Closure> expand(const SlotId& from, bool ignoreOutOfWindow);

    // Returns true when a checkpoint split interrupted the batch.
    bool runSccBatch(const Closure& closure, bool onlyFirstScc, const Hooks& hooks);
    void executeCheckpointScc(const std::vector<SlotId>& scc, const Hooks& hooks);
    void executeSlot(const SlotId& slot, const Hooks& hooks);
    void markExecuted(const SlotId& slot);

    std::vector<std::vector<SlotId>> sccsInverseTopological(const Closure& closure) const;

    std::uint32_t replicaCount_;
    std::uint64_t k_;
    std::map<SlotId, CommitRecord> pending_;          // committed, not yet executed
    std::map<ReplicaId, std::uint64_t> exp_;          // first unexecuted counter
    std::map<ReplicaId, std::set<std::uint64_t>> executedBeyond_;
    DependencySet lastBarrier_;  // previous checkpoint's coverage
    ExecutionStats stats_;
};

}  // namespace peerbft
