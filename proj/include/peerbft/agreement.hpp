#pragma once

#include <functional>
#include <map>
#include <set>

#include "peerbft/app/application.hpp"
#include "peerbft/config.hpp"
#include "peerbft/messages.hpp"

namespace peerbft {

enum class SlotStep : std::uint8_t {
    Init,
    Proposed,
    FpVerified,
    FpCommitted,
    RpVerified,
    RpPrepared,
    RpCommitted,
    ViewChange,
    Committed,  // learned through Exec recovery
};

// Handed from agreement to execution; byte-identical on all correct replicas
// that commit the slot.
struct CommitRecord {
    SlotId slot;
    Request request;
    DependencySet deps;

    Bytes encoded() const {
        Encoder enc;
        enc.slot(slot);
        request.encode(enc);
        deps.encode(enc);
        return enc.take();
    }

    auto operator<=>(const CommitRecord&) const = default;
};

// Which route committed the slot locally. Replica-local metadata, not part of
// the record itself.
enum class CommitPath : std::uint8_t { FastPath, Reconciliation, ViewChange, Recovery };

struct Destination {
    enum class Kind : std::uint8_t { AllReplicas, Replica, Client };

    Kind kind = Kind::AllReplicas;
    ReplicaId replica = 0;
    ClientId client = 0;

    static Destination broadcast() { return {}; }
    static Destination to(ReplicaId r) { return {Kind::Replica, r, 0}; }
    static Destination toClient(ClientId c) { return {Kind::Client, 0, c}; }
};

struct Outbound {
    ProtocolMessage message;
    Destination dest;
};

struct TimerRequest {
    std::uint64_t token = 0;
    Micros delay = 0;
};

struct CommittedSlot {
    CommitRecord record;
    CommitPath path = CommitPath::FastPath;
    ViewNumber view = kInitialView;
};

struct LocalEvent {
    enum class Kind : std::uint8_t {
        Proposed,
        Committed,
        Executed,
        UnblockExec,
        CheckpointTaken,
        CheckpointStable,
        CheckpointApplied,
        ViewChangeStarted,
        NewViewInstalled,
        InvariantViolation,
    };

    Kind kind = Kind::Committed;
    SlotId slot;
    ViewNumber view = kInitialView;
    CommitPath path = CommitPath::FastPath;
    ClientId client = 0;
    Timestamp timestamp = 0;
    bool duplicate = false;
    std::uint64_t seq = 0;
    Digest digest;
    std::string note;
};

struct EngineOutput {
    std::vector<Outbound> messages;
    std::vector<CommittedSlot> commits;
    std::vector<TimerRequest> timers;
    std::vector<LocalEvent> events;
};

// All live requests known to this replica, keyed by slot; the source for
// conflict-dependency computation. Requests stay here until garbage-collected
// by a stable checkpoint.
class RequestIndex {
  public:
    RequestIndex(const Application& app) : app_(&app) {}

    void noteRequest(const SlotId& slot, const Request& request);
    void noteNoOp(const SlotId& slot);
    void prune(const DependencySet& barrier);

    // Latest conflicting slot per replica over every known request.
    DependencySet conflictDeps(const Request& request,
                               std::optional<SlotId> exclude = std::nullopt) const;

    bool knownLive(ClientId client, Timestamp ts) const;
    const Request* requestAt(const SlotId& slot) const;
    size_t size() const { return bySlot_.size(); }

  private:
    const Application* app_;
    std::map<SlotId, Request> bySlot_;
    std::map<std::pair<ClientId, Timestamp>, std::set<SlotId>> byClientTs_;
};

// Certificate validation is pure: same inputs, same verdict on every replica.
bool validateCertificate(const Keyring& ring, const ReplicaConfig& cfg, const SlotId& slot,
                         const Certificate& cert);

// The fast-path rule: every dependency absent from the DepPropose must be
// reported by at least f+1 of the 2f DepVerifys.
bool fastPathDepsRule(const DepPropose& dp, const std::vector<DepVerify>& dvs,
                      std::uint32_t maxFaulty);

// Hash identifying a DepPropose; excludes the attached full request so
// rebroadcasts without it refer to the same proposal.
Digest dpHash(const DepPropose& dp);

// View-change coordinator for a slot: (slot.coordinator + max(0, view)) mod N.
ReplicaId viewCoordinator(const SlotId& slot, ViewNumber view, std::uint32_t replicaCount);

// Deterministic cycle over all 2f-subsets of the non-coordinator replicas.
std::vector<std::vector<ReplicaId>> fastQuorumCycle(ReplicaId coordinator,
                                                    std::uint32_t replicaCount,
                                                    std::uint32_t quorumSize);

struct AgreementStats {
    std::uint64_t invariantViolations = 0;
    std::uint64_t droppedMessages = 0;
    std::uint64_t retainedSlotsHighWater = 0;  // max live slots of one coordinator
    std::uint64_t fpCommits = 0;
    std::uint64_t rpCommits = 0;
    std::uint64_t vcCommits = 0;
    std::uint64_t recoveryCommits = 0;
    std::uint64_t preparesSent = 0;
};

// Per-slot consensus state machine: fast path, reconciliation, per-slot view
// changes, dependency-existence gating, timers and lagging-replica recovery.
// Strictly single-threaded; consumes one event at a time and appends outbound
// messages, commit records and timer requests to the caller's output.
class AgreementEngine {
  public:
    AgreementEngine(const ReplicaConfig& cfg, const Keyring& ring, RequestIndex& index,
                    std::uint64_t& tokenCounter);
    ~AgreementEngine();
    AgreementEngine(AgreementEngine&&) noexcept;

    // Coordinator entry point. Returns false when the ordering window is full
    // and the request must be queued by the caller.
    bool proposeRequest(const Request& request, EngineOutput& out);

    void onDepPropose(const DepPropose& msg, EngineOutput& out);
    void onDepVerify(const DepVerify& msg, EngineOutput& out);
    void onDepCommit(const DepCommit& msg, EngineOutput& out);
    void onPrepare(const Prepare& msg, EngineOutput& out);
    void onCommit(const Commit& msg, EngineOutput& out);
    void onViewChange(const ViewChange& msg, EngineOutput& out);
    void onNewView(const NewView& msg, EngineOutput& out);
    void onQueryExec(const QueryExec& msg, EngineOutput& out);
    void onExecInfo(const ExecInfo& msg, EngineOutput& out);

    // Fills request-content holes from any source carrying a full request.
    // Only content that arrived attached to the proposal itself may trigger
    // our DepVerify; content learned from a client broadcast finalizes
    // commits and conflict bookkeeping but never substitutes for the
    // proposal delivery.
    void onRequestContent(const Request& request, EngineOutput& out, bool fromProposal = false);

    // Returns true when the token belonged to this engine.
    bool onTimer(std::uint64_t token, EngineOutput& out);

    // Slots the execution scheduler is blocked on (committed elsewhere but
    // unknown here); each gets a periodic QueryExec until it commits.
    void noteExecutionBlockers(const std::set<SlotId>& blockers, EngineOutput& out);

    // Stable checkpoint: garbage-collect covered slots, adopt the barrier as
    // the minimum dependency set and slide the ordering window.
    void onStableCheckpoint(const DependencySet& barrier, EngineOutput& out);

    // After state transfer: same effects, plus own-counter fast-forward.
    void applyRestoredBarrier(const DependencySet& barrier, EngineOutput& out);

    // Fresh dependency set for the checkpoint request of a slot, used for
    // auxiliary DepVerifys (the CRC part).
    DependencySet checkpointAuxDeps(const SlotId& slot) const;

    bool isCommitted(const SlotId& slot) const;
    const CommitRecord* committedRecord(const SlotId& slot) const;
    SlotStep stepOf(const SlotId& slot) const;
    ViewNumber viewOf(const SlotId& slot) const;
    bool requestCommitted(ClientId client, Timestamp ts) const;
    std::uint64_t nextOwnCounter() const { return nextOwnCounter_; }
    std::uint64_t liveSlotsOf(ReplicaId coordinator) const;
    const AgreementStats& stats() const { return stats_; }
    const DependencySet& stableBarrier() const { return stableBarrier_; }

  private:
    struct SlotState;

    SlotState& slotState(const SlotId& slot);
    SlotState* findSlot(const SlotId& slot);
    const SlotState* findSlot(const SlotId& slot) const;

    bool inOrderingWindow(const SlotId& slot) const;
    bool coveredByBarrier(const SlotId& slot) const;
    std::uint64_t windowBase(ReplicaId coordinator) const;
    bool isCheckpointSlot(const SlotId& slot) const { return slot.counter % cfg_.cpInterval == 0; }

    bool depAdmitted(const SlotId& dep) const;
    bool depsAdmitted(const DependencySet& deps) const;
    bool predecessorAdmitted(const SlotId& slot) const;

    void proposeOne(const Request& request, const std::vector<ReplicaId>& fastQuorum,
                    EngineOutput& out);
    std::vector<ReplicaId> defaultFastQuorum() const;
    bool requestFullyCommitted(const Request& request) const;

    void processDepPropose(SlotState& st, const DepPropose& msg, EngineOutput& out);
    void maybeSendDepVerify(SlotState& st, EngineOutput& out);
    void evaluateVerification(SlotState& st, EngineOutput& out);
    void evaluateDepCommits(SlotState& st, EngineOutput& out);
    void evaluatePrepares(SlotState& st, EngineOutput& out);
    void evaluateCommits(SlotState& st, EngineOutput& out);
    void enterReconciliation(SlotState& st, EngineOutput& out);
    void sendPrepareForBasis(SlotState& st, EngineOutput& out);
    void startViewChange(SlotState& st, ViewNumber newView, EngineOutput& out);
    void maybeJumpView(SlotState& st, EngineOutput& out);
    void tryComputeNewView(SlotState& st, EngineOutput& out);
    void installNewView(SlotState& st, const NewView& msg, EngineOutput& out);
    Certificate bestCertificate(SlotState& st, EngineOutput& out);
    void armCommitTimer(SlotState& st, EngineOutput& out);
    void commitSlot(SlotState& st, const Request& request, const DependencySet& deps,
                    CommitPath path, EngineOutput& out);
    void commitWithBasis(SlotState& st, CommitPath path, EngineOutput& out);
    void finalizeCommit(SlotState& st, EngineOutput& out);
    void admitSlot(SlotState& st, EngineOutput& out);
    void drainReady(EngineOutput& out);
    void noteInvariantViolation(const SlotId& slot, const std::string& what, EngineOutput& out);

    DependencySet basisDeps(const SlotState& st) const;
    std::vector<DepVerify> basisDvs(const SlotState& st) const;

    std::uint64_t armTimer(SlotState& st, int kindIdx, Micros delay, EngineOutput& out);
    void cancelTimer(SlotState& st, int kindIdx);
    void cancelAllTimers(SlotState& st);

    void broadcast(const ProtocolMessage& msg, EngineOutput& out, bool retransmittable = true);
    void sendTo(ReplicaId dest, const ProtocolMessage& msg, EngineOutput& out);
    void selfDeliver(const ProtocolMessage& msg, EngineOutput& out);
    void ensureRetransmitTimer(EngineOutput& out);

    ReplicaConfig cfg_;
    const Keyring* ring_;
    RequestIndex* index_;
    std::uint64_t* tokenCounter_;

    std::map<SlotId, SlotState> slots_;
    std::map<SlotId, DepPropose> pendingDps_;  // valid but blocked on order/deps
    std::map<Digest, std::set<SlotId>> contentWaiters_;
    std::set<SlotId> queryWaiters_;   // unadmitted deps something is blocked on
    std::set<SlotId> execBlockers_;   // uncommitted slots blocking execution
    DependencySet stableBarrier_;
    std::uint64_t nextOwnCounter_ = 0;
    std::map<SlotId, Request> ownProposalContent_;  // for re-proposal after no-op
    std::map<Digest, std::vector<ReplicaId>> lastQuorumUsed_;
    std::map<ClientId, Timestamp> committedTs_;
    std::map<std::uint64_t, std::pair<SlotId, int>> timerTargets_;
    std::uint64_t retransmitToken_ = 0;
    AgreementStats stats_;
    bool draining_ = false;
    bool drainRequested_ = false;
    std::uint64_t mutations_ = 0;
};

}  // namespace peerbft
