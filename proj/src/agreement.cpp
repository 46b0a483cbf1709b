#include "peerbft/agreement.hpp"

#include <algorithm>
#include <array>

namespace peerbft {

namespace {

// Per-slot timer kinds.
constexpr int kProposeTimer = 0;
constexpr int kCommitTimer = 1;
constexpr int kViewChangeTimer = 2;
constexpr int kQueryExecTimer = 3;
constexpr int kTimerKinds = 4;

const Digest& checkpointRequestHash() {
    static const Digest d = Request::checkpointRequest().hash();
    return d;
}

const Digest& noOpRequestHash() {
    static const Digest d = Request::noOp().hash();
    return d;
}

bool validFastQuorumShape(const std::vector<ReplicaId>& f, ReplicaId coordinator,
                          std::uint32_t replicaCount, std::uint32_t quorumSize) {
    if (f.size() != quorumSize) return false;
    for (size_t i = 0; i < f.size(); ++i) {
        if (f[i] >= replicaCount || f[i] == coordinator) return false;
        if (i > 0 && f[i - 1] >= f[i]) return false;  // strictly ascending
    }
    return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// RequestIndex

void RequestIndex::noteRequest(const SlotId& slot, const Request& request) {
    auto [it, inserted] = bySlot_.try_emplace(slot, request);
    if (!inserted) {
        if (it->second == request) return;
        it->second = request;
    }
    auto track = [&](const Request& r) {
        if (r.isRegular()) byClientTs_[{r.client, r.timestamp}].insert(slot);
    };
    track(request);
    for (const auto& m : request.members) track(m);
}

void RequestIndex::noteNoOp(const SlotId& slot) {
    auto it = bySlot_.find(slot);
    if (it != bySlot_.end()) {
        auto untrack = [&](const Request& r) {
            if (!r.isRegular()) return;
            auto cit = byClientTs_.find({r.client, r.timestamp});
            if (cit != byClientTs_.end()) {
                cit->second.erase(slot);
                if (cit->second.empty()) byClientTs_.erase(cit);
            }
        };
        untrack(it->second);
        for (const auto& m : it->second.members) untrack(m);
    }
    bySlot_[slot] = Request::noOp();
}

void RequestIndex::prune(const DependencySet& barrier) {
    for (auto it = bySlot_.begin(); it != bySlot_.end();) {
        if (!barrier.covers(it->first)) {
            ++it;
            continue;
        }
        auto untrack = [&](const Request& r) {
            if (!r.isRegular()) return;
            auto cit = byClientTs_.find({r.client, r.timestamp});
            if (cit != byClientTs_.end()) {
                cit->second.erase(it->first);
                if (cit->second.empty()) byClientTs_.erase(cit);
            }
        };
        untrack(it->second);
        for (const auto& m : it->second.members) untrack(m);
        it = bySlot_.erase(it);
    }
}

DependencySet RequestIndex::conflictDeps(const Request& request,
                                         std::optional<SlotId> exclude) const {
    DependencySet deps;
    for (const auto& [slot, known] : bySlot_) {
        if (exclude && slot == *exclude) continue;
        if (known.isNoOp()) continue;
        if (requestsConflict(*app_, request, known)) deps.add(slot);
    }
    return deps;
}

bool RequestIndex::knownLive(ClientId client, Timestamp ts) const {
    return byClientTs_.count({client, ts}) > 0;
}

const Request* RequestIndex::requestAt(const SlotId& slot) const {
    auto it = bySlot_.find(slot);
    return it == bySlot_.end() ? nullptr : &it->second;
}

// ---------------------------------------------------------------------------
// Pure helpers

Digest dpHash(const DepPropose& dp) {
    Encoder enc;
    dp.encodeSignedBody(enc);
    enc.bytes(dp.signature);
    return digestOf(enc.result());
}

ReplicaId viewCoordinator(const SlotId& slot, ViewNumber view, std::uint32_t replicaCount) {
    std::uint32_t v = view > 0 ? static_cast<std::uint32_t>(view) : 0;
    return static_cast<ReplicaId>((slot.coordinator + v) % replicaCount);
}

std::vector<std::vector<ReplicaId>> fastQuorumCycle(ReplicaId coordinator,
                                                    std::uint32_t replicaCount,
                                                    std::uint32_t quorumSize) {
    std::vector<ReplicaId> followers;
    for (ReplicaId r = 0; r < replicaCount; ++r)
        if (r != coordinator) followers.push_back(r);

    std::vector<std::vector<ReplicaId>> subsets;
    if (quorumSize == 0 || quorumSize > followers.size()) return subsets;
    std::vector<std::uint32_t> idx(quorumSize);
    for (std::uint32_t i = 0; i < quorumSize; ++i) idx[i] = i;
    while (true) {
        std::vector<ReplicaId> subset;
        for (auto i : idx) subset.push_back(followers[i]);
        subsets.push_back(std::move(subset));
        int pos = static_cast<int>(quorumSize) - 1;
        while (pos >= 0 &&
               idx[pos] == static_cast<std::uint32_t>(followers.size() - quorumSize + pos))
            --pos;
        if (pos < 0) break;
        ++idx[pos];
        for (size_t j = pos + 1; j < quorumSize; ++j) idx[j] = idx[j - 1] + 1;
    }
    return subsets;
}

bool fastPathDepsRule(const DepPropose& dp, const std::vector<DepVerify>& dvs,
                      std::uint32_t maxFaulty) {
    // A compact entry r->c implies every counter below c, and the number of
    // replicas reporting an implied counter only grows as the counter shrinks,
    // so checking the per-replica union maximum covers all implied slots.
    std::map<ReplicaId, std::uint64_t> unionMax;
    for (const auto& dv : dvs)
        for (const auto& [rep, cnt] : dv.deps.entries()) {
            auto [it, inserted] = unionMax.try_emplace(rep, cnt);
            if (!inserted && it->second < cnt) it->second = cnt;
        }
    for (const auto& [rep, cnt] : unionMax) {
        auto dpCnt = dp.deps.counterFor(rep);
        if (dpCnt && *dpCnt >= cnt) continue;  // already in the proposal
        std::uint32_t reporters = 0;
        for (const auto& dv : dvs) {
            auto c = dv.deps.counterFor(rep);
            if (c && *c >= cnt) ++reporters;
        }
        if (reporters < maxFaulty + 1) return false;
    }
    return true;
}

bool validateCertificate(const Keyring& ring, const ReplicaConfig& cfg, const SlotId& slot,
                         const Certificate& cert) {
    const bool cpSlot = slot.counter % cfg.cpInterval == 0;
    switch (cert.kind) {
        case Certificate::Kind::None:
            // Checkpoint slots always have at least the CRC part available.
            return !cpSlot;
        case Certificate::Kind::CrcPart: {
            if (!cpSlot || !cert.auxDepVerify) return false;
            const DepVerify& dv = *cert.auxDepVerify;
            return dv.slot == slot && dv.depProposeHash == checkpointRequestHash() &&
                   verifySignedMessage(ring, dv);
        }
        case Certificate::Kind::Fpc:
        case Certificate::Kind::Rpc:
            break;
        default:
            return false;
    }

    if (cert.depPropose) {
        const DepPropose& dp = *cert.depPropose;
        if (dp.slot != slot || dp.coordinator != slot.coordinator) return false;
        if (!validFastQuorumShape(dp.fastQuorum, dp.coordinator, cfg.replicaCount,
                                  cfg.fastQuorumSize()))
            return false;
        if (!verifySignedMessage(ring, dp)) return false;
        if (dp.request && dp.request->hash() != dp.requestHash) return false;
        if (cert.dvSet.size() != cfg.fastQuorumSize()) return false;
        Digest hdp = dpHash(dp);
        std::set<ReplicaId> senders;
        for (const auto& dv : cert.dvSet) {
            if (dv.slot != slot || dv.depProposeHash != hdp) return false;
            if (std::find(dp.fastQuorum.begin(), dp.fastQuorum.end(), dv.sender_) ==
                dp.fastQuorum.end())
                return false;
            if (!senders.insert(dv.sender_).second) return false;
            if (!verifySignedMessage(ring, dv)) return false;
        }
        if (cert.kind == Certificate::Kind::Fpc &&
            !fastPathDepsRule(dp, cert.dvSet, cfg.maxFaulty))
            return false;
    } else {
        // A view >= 0 basis without a proposal: a no-op decision (empty dv
        // set) or a checkpoint CRC basis (2f+1 auxiliary DepVerifys).
        if (cert.kind != Certificate::Kind::Rpc || cert.view < 0) return false;
        if (!cert.dvSet.empty()) {
            if (!cpSlot || cert.dvSet.size() != cfg.quorum()) return false;
            std::set<ReplicaId> senders;
            for (const auto& dv : cert.dvSet) {
                if (dv.slot != slot || dv.depProposeHash != checkpointRequestHash()) return false;
                if (!senders.insert(dv.sender_).second) return false;
                if (!verifySignedMessage(ring, dv)) return false;
            }
        }
    }

    if (cert.kind == Certificate::Kind::Rpc) {
        std::vector<DepVerify> sorted = cert.dvSet;
        sortBySender(sorted);
        Digest h = dvSetHash(sorted);
        std::set<ReplicaId> senders;
        for (const auto& p : cert.prepareSet) {
            if (p.slot != slot || p.view != cert.view || p.dvSetHash != h) return false;
            if (!senders.insert(p.sender_).second) return false;
            if (!verifySignedMessage(ring, p)) return false;
        }
        if (senders.size() < cfg.quorum()) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// SlotState

struct AgreementEngine::SlotState {
    SlotId slot;
    SlotStep step = SlotStep::Init;
    ViewNumber view = kInitialView;    // installed view
    ViewNumber vcView = kInitialView;  // highest view we issued a ViewChange for

    std::optional<DepPropose> depPropose;  // basis proposal (view -1 or installed)
    std::optional<Request> request;        // full content when known
    NewView::Selection basisKind = NewView::Selection::Certified;
    std::vector<DepVerify> installedDvs;  // basis dv set for view >= 0

    std::map<ReplicaId, DepVerify> depVerifys;  // accepted, view -1
    std::vector<DepVerify> pendingDvs;          // blocked on proposal or wait gate
    std::map<ReplicaId, DepCommit> depCommits;
    std::map<ViewNumber, std::map<ReplicaId, Prepare>> prepares;
    std::map<ViewNumber, std::map<ReplicaId, Commit>> commits;
    std::map<ViewNumber, std::map<ReplicaId, ViewChange>> viewChanges;
    std::map<ReplicaId, ViewNumber> knownViews;
    std::set<ReplicaId> dvSenders;  // distinct DepVerify senders, any content
    std::set<ReplicaId> vcSenders;  // distinct ViewChange senders, any view
    std::map<Digest, std::map<ReplicaId, ExecInfo>> execReports;

    std::optional<Certificate> fpc;
    std::optional<Certificate> rpc;
    std::optional<DependencySet> sentDvDeps;  // deps of our own DepVerify

    bool dpProcessed = false;
    bool newViewSeen = false;
    bool sentDepVerify = false;
    bool sentDepCommit = false;
    bool sentInitialPrepare = false;  // Prepare in view -1
    bool needsDvAfterContent = false;
    bool basisPrepareGatePending = false;
    bool proposeTimerResolved = false;
    bool commitTimerLatched = false;
    bool crcComputePending = false;  // NewView blocked on aux dependency gating
    std::set<ViewNumber> sentPrepare, sentCommit, sentViewChange;
    std::set<ViewNumber> nvTimerArmedFor;

    bool committed = false;
    std::optional<CommitRecord> record;
    CommitPath path = CommitPath::FastPath;
    ViewNumber commitView = kInitialView;
    std::optional<std::pair<DependencySet, CommitPath>> pendingContentCommit;

    std::map<MsgTag, ProtocolMessage> lastSent;
    std::array<std::uint64_t, kTimerKinds> timers{};
};

// ---------------------------------------------------------------------------
// Engine basics

AgreementEngine::AgreementEngine(const ReplicaConfig& cfg, const Keyring& ring,
                                 RequestIndex& index, std::uint64_t& tokenCounter)
    : cfg_(cfg), ring_(&ring), index_(&index), tokenCounter_(&tokenCounter) {
    cfg_.validate();
}

AgreementEngine::~AgreementEngine() = default;
AgreementEngine::AgreementEngine(AgreementEngine&&) noexcept = default;

AgreementEngine::SlotState& AgreementEngine::slotState(const SlotId& slot) {
    auto [it, inserted] = slots_.try_emplace(slot);
    if (inserted) {
        it->second.slot = slot;
        std::uint64_t live = liveSlotsOf(slot.coordinator);
        if (live > stats_.retainedSlotsHighWater) stats_.retainedSlotsHighWater = live;
    }
    return it->second;
}

AgreementEngine::SlotState* AgreementEngine::findSlot(const SlotId& slot) {
    auto it = slots_.find(slot);
    return it == slots_.end() ? nullptr : &it->second;
}

const AgreementEngine::SlotState* AgreementEngine::findSlot(const SlotId& slot) const {
    auto it = slots_.find(slot);
    return it == slots_.end() ? nullptr : &it->second;
}

std::uint64_t AgreementEngine::liveSlotsOf(ReplicaId coordinator) const {
    auto lo = slots_.lower_bound(SlotId{coordinator, 0});
    auto hi = slots_.lower_bound(SlotId{coordinator + 1, 0});
    return static_cast<std::uint64_t>(std::distance(lo, hi));
}

std::uint64_t AgreementEngine::windowBase(ReplicaId coordinator) const {
    auto c = stableBarrier_.counterFor(coordinator);
    return c ? *c + 1 : 0;
}

bool AgreementEngine::coveredByBarrier(const SlotId& slot) const {
    return stableBarrier_.covers(slot);
}

bool AgreementEngine::inOrderingWindow(const SlotId& slot) const {
    return slot.coordinator < cfg_.replicaCount &&
           slot.counter < windowBase(slot.coordinator) + cfg_.orderingWindow();
}

bool AgreementEngine::depAdmitted(const SlotId& dep) const {
    if (coveredByBarrier(dep)) return true;
    const SlotState* st = findSlot(dep);
    if (!st) return false;
    return st->committed || st->dpProcessed || st->newViewSeen ||
           st->dvSenders.size() >= cfg_.maxFaulty + 1 ||
           st->vcSenders.size() >= cfg_.maxFaulty + 1 || !st->sentViewChange.empty();
}

bool AgreementEngine::depsAdmitted(const DependencySet& deps) const {
    for (const auto& [rep, cnt] : deps.entries())
        if (!depAdmitted(SlotId{rep, cnt})) return false;
    return true;
}

bool AgreementEngine::predecessorAdmitted(const SlotId& slot) const {
    if (slot.counter == 0) return true;
    return depAdmitted(SlotId{slot.coordinator, slot.counter - 1});
}

bool AgreementEngine::isCommitted(const SlotId& slot) const {
    const SlotState* st = findSlot(slot);
    return st && st->committed;
}

const CommitRecord* AgreementEngine::committedRecord(const SlotId& slot) const {
    const SlotState* st = findSlot(slot);
    return st && st->record ? &*st->record : nullptr;
}

SlotStep AgreementEngine::stepOf(const SlotId& slot) const {
    const SlotState* st = findSlot(slot);
    return st ? st->step : SlotStep::Init;
}

ViewNumber AgreementEngine::viewOf(const SlotId& slot) const {
    const SlotState* st = findSlot(slot);
    return st ? st->view : kInitialView;
}

bool AgreementEngine::requestCommitted(ClientId client, Timestamp ts) const {
    auto it = committedTs_.find(client);
    return it != committedTs_.end() && it->second >= ts;
}

bool AgreementEngine::requestFullyCommitted(const Request& request) const {
    if (request.isRegular()) return requestCommitted(request.client, request.timestamp);
    if (request.isBatch()) {
        for (const auto& m : request.members)
            if (!requestCommitted(m.client, m.timestamp)) return false;
        return true;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Timers

std::uint64_t AgreementEngine::armTimer(SlotState& st, int kindIdx, Micros delay,
                                        EngineOutput& out) {
    cancelTimer(st, kindIdx);
    std::uint64_t token = ++(*tokenCounter_);
    timerTargets_[token] = {st.slot, kindIdx};
    st.timers[kindIdx] = token;
    out.timers.push_back({token, delay});
    return token;
}

void AgreementEngine::cancelTimer(SlotState& st, int kindIdx) {
    if (st.timers[kindIdx]) {
        timerTargets_.erase(st.timers[kindIdx]);
        st.timers[kindIdx] = 0;
    }
}

void AgreementEngine::cancelAllTimers(SlotState& st) {
    for (int k = 0; k < kTimerKinds; ++k) cancelTimer(st, k);
}

void AgreementEngine::ensureRetransmitTimer(EngineOutput& out) {
    if (retransmitToken_) return;
    retransmitToken_ = ++(*tokenCounter_);
    out.timers.push_back({retransmitToken_, cfg_.retransmitInterval()});
}

// ---------------------------------------------------------------------------
// Sending

void AgreementEngine::sendTo(ReplicaId dest, const ProtocolMessage& msg, EngineOutput& out) {
    if (dest == cfg_.id) {
        selfDeliver(msg, out);
        return;
    }
    out.messages.push_back({msg, Destination::to(dest)});
}

void AgreementEngine::broadcast(const ProtocolMessage& msg, EngineOutput& out,
                                bool retransmittable) {
    out.messages.push_back({msg, Destination::broadcast()});
    if (retransmittable) {
        if (auto slot = messageSlot(msg)) {
            SlotState& st = slotState(*slot);
            if (!st.committed) {
                st.lastSent[messageTag(msg)] = msg;
                ensureRetransmitTimer(out);
            }
        }
    }
    selfDeliver(msg, out);
}

void AgreementEngine::selfDeliver(const ProtocolMessage& msg, EngineOutput& out) {
    std::visit(
        [&](const auto& m) {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, DepVerify>)
                onDepVerify(m, out);
            else if constexpr (std::is_same_v<M, DepCommit>)
                onDepCommit(m, out);
            else if constexpr (std::is_same_v<M, Prepare>)
                onPrepare(m, out);
            else if constexpr (std::is_same_v<M, Commit>)
                onCommit(m, out);
            else if constexpr (std::is_same_v<M, ViewChange>)
                onViewChange(m, out);
            else if constexpr (std::is_same_v<M, NewView>)
                onNewView(m, out);
            // Other kinds are never consumed by their own sender.
        },
        msg);
}

// ---------------------------------------------------------------------------
// Propose path

std::vector<ReplicaId> AgreementEngine::defaultFastQuorum() const {
    std::vector<std::pair<Micros, ReplicaId>> byDelay;
    for (ReplicaId r = 0; r < cfg_.replicaCount; ++r) {
        if (r == cfg_.id) continue;
        Micros d = 0;
        auto it = cfg_.latencyHints.find(r);
        if (it != cfg_.latencyHints.end()) d = it->second;
        byDelay.push_back({d, r});
    }
    std::sort(byDelay.begin(), byDelay.end());
    std::vector<ReplicaId> f;
    for (std::uint32_t i = 0; i < cfg_.fastQuorumSize(); ++i) f.push_back(byDelay[i].second);
    std::sort(f.begin(), f.end());
    return f;
}

bool AgreementEngine::proposeRequest(const Request& request, EngineOutput& out) {
    std::uint64_t needed = 1 + (nextOwnCounter_ % cfg_.cpInterval == 0 ? 1 : 0);
    if (nextOwnCounter_ + needed > windowBase(cfg_.id) + cfg_.orderingWindow())
        return false;  // ordering window full; caller queues the request

    // A checkpoint request is due whenever the counter hits the interval.
    if (nextOwnCounter_ % cfg_.cpInterval == 0)
        proposeOne(Request::checkpointRequest(), defaultFastQuorum(), out);
    proposeOne(request, defaultFastQuorum(), out);
    drainReady(out);
    return true;
}

void AgreementEngine::proposeOne(const Request& request, const std::vector<ReplicaId>& fastQuorum,
                                 EngineOutput& out) {
    const bool cpDue = nextOwnCounter_ % cfg_.cpInterval == 0;
    if (cpDue != request.isCheckpoint()) {
        noteInvariantViolation(SlotId{cfg_.id, nextOwnCounter_},
                               "checkpoint request out of schedule", out);
        return;
    }
    SlotId slot{cfg_.id, nextOwnCounter_++};
    SlotState& st = slotState(slot);

    DepPropose dp;
    dp.slot = slot;
    dp.coordinator = cfg_.id;
    dp.requestHash = request.hash();
    dp.deps = mergeCompact(index_->conflictDeps(request, slot), stableBarrier_);
    dp.fastQuorum = fastQuorum;
    signMessage(*ring_, dp);
    dp.request = request;

    index_->noteRequest(slot, request);
    st.depPropose = dp;
    st.request = request;
    st.dpProcessed = true;
    st.step = SlotStep::Proposed;
    ++mutations_;

    if (request.isRegular() || request.isBatch()) {
        ownProposalContent_[slot] = request;
        lastQuorumUsed_[request.hash()] = fastQuorum;
    }

    LocalEvent ev;
    ev.kind = LocalEvent::Kind::Proposed;
    ev.slot = slot;
    ev.digest = dp.requestHash;
    for (ReplicaId q : fastQuorum) {
        if (!ev.note.empty()) ev.note += ",";
        ev.note += std::to_string(q);
    }
    out.events.push_back(ev);

    out.messages.push_back({dp, Destination::broadcast()});
    st.lastSent[MsgTag::DepPropose] = dp;
    ensureRetransmitTimer(out);
    armCommitTimer(st, out);
    evaluateVerification(st, out);
}

void AgreementEngine::armCommitTimer(SlotState& st, EngineOutput& out) {
    if (st.commitTimerLatched || st.committed || st.vcView >= 0) return;
    st.commitTimerLatched = true;
    armTimer(st, kCommitTimer, cfg_.commitTimeout(), out);
}

// ---------------------------------------------------------------------------
// DepPropose

void AgreementEngine::onDepPropose(const DepPropose& msg, EngineOutput& out) {
    if (coveredByBarrier(msg.slot)) return;
    if (!inOrderingWindow(msg.slot) || msg.coordinator != msg.slot.coordinator ||
        msg.coordinator == cfg_.id ||
        !validFastQuorumShape(msg.fastQuorum, msg.coordinator, cfg_.replicaCount,
                              cfg_.fastQuorumSize())) {
        ++stats_.droppedMessages;
        return;
    }
    // Checkpoint requests on the interval and only there; never a no-op.
    const bool cpSlot = isCheckpointSlot(msg.slot);
    if (cpSlot != (msg.requestHash == checkpointRequestHash()) ||
        msg.requestHash == noOpRequestHash()) {
        ++stats_.droppedMessages;
        return;
    }
    DepPropose accepted = msg;
    if (accepted.request) {
        if (accepted.request->hash() != accepted.requestHash ||
            !verifyRequestSignature(*ring_, *accepted.request)) {
            ++stats_.droppedMessages;
            return;
        }
    }

    SlotState& st = slotState(msg.slot);
    if (st.committed) return;
    if (st.depPropose || st.view >= 0 || st.vcView >= 0) {
        // Only the first proposal per slot is accepted; retransmissions may
        // still fill in missing request content.
        bool sameProposal = st.depPropose && dpHash(*st.depPropose) == dpHash(accepted);
        if (sameProposal && accepted.request && !st.request)
            onRequestContent(*accepted.request, out, /*fromProposal=*/true);
        else if (!sameProposal)
            ++stats_.droppedMessages;
        return;
    }

    auto pending = pendingDps_.find(msg.slot);
    if (pending != pendingDps_.end()) {
        bool same = dpHash(pending->second) == dpHash(accepted);
        if (same && accepted.request && !pending->second.request)
            pending->second.request = accepted.request;
        else if (!same)
            ++stats_.droppedMessages;
        drainReady(out);
        return;
    }

    pendingDps_.emplace(msg.slot, std::move(accepted));
    ++mutations_;
    // The propose timer runs from receipt so a proposal a faulty coordinator
    // sent to only one replica still reaches everyone.
    armTimer(st, kProposeTimer, cfg_.proposeTimeout(), out);
    drainReady(out);
}

void AgreementEngine::processDepPropose(SlotState& st, const DepPropose& msg, EngineOutput& out) {
    st.depPropose = msg;
    st.dpProcessed = true;
    if (st.step == SlotStep::Init) st.step = SlotStep::Proposed;
    ++mutations_;
    if (msg.request) {
        st.request = *msg.request;
        index_->noteRequest(st.slot, *msg.request);
    } else if (isCheckpointSlot(st.slot)) {
        st.request = Request::checkpointRequest();
        index_->noteRequest(st.slot, *st.request);
    } else {
        contentWaiters_[msg.requestHash].insert(st.slot);
        st.needsDvAfterContent = true;
    }
    armCommitTimer(st, out);
    maybeSendDepVerify(st, out);
    evaluateVerification(st, out);
}

void AgreementEngine::maybeSendDepVerify(SlotState& st, EngineOutput& out) {
    if (st.sentDepVerify || st.committed || st.view >= 0 || st.vcView >= 0) return;
    if (!st.depPropose || !st.request) return;
    const auto& f = st.depPropose->fastQuorum;
    if (std::find(f.begin(), f.end(), cfg_.id) == f.end()) return;  // not in the quorum

    DepVerify dv;
    dv.slot = st.slot;
    dv.sender_ = cfg_.id;
    dv.depProposeHash = dpHash(*st.depPropose);
    dv.deps = mergeCompact(index_->conflictDeps(*st.request, st.slot), stableBarrier_);
    signMessage(*ring_, dv);
    // Everything the index knows passed the wait gate already.
    if (!depsAdmitted(dv.deps))
        noteInvariantViolation(st.slot, "DepVerify with unadmitted dependencies", out);
    st.sentDepVerify = true;
    st.sentDvDeps = dv.deps;
    broadcast(dv, out);
}

// ---------------------------------------------------------------------------
// DepVerify

void AgreementEngine::onDepVerify(const DepVerify& msg, EngineOutput& out) {
    if (coveredByBarrier(msg.slot)) return;
    if (!inOrderingWindow(msg.slot) || msg.sender_ >= cfg_.replicaCount) {
        ++stats_.droppedMessages;
        return;
    }
    SlotState& st = slotState(msg.slot);
    bool newSender = st.dvSenders.insert(msg.sender_).second;
    if (newSender) {
        ++mutations_;
        if (st.dvSenders.size() == cfg_.maxFaulty + 1) armCommitTimer(st, out);
    }

    if (!st.committed && st.view < 0 && st.vcView < 0 && !st.depVerifys.count(msg.sender_)) {
        bool duplicate = false;
        for (const auto& p : st.pendingDvs)
            if (p.sender_ == msg.sender_) duplicate = true;
        if (!duplicate) st.pendingDvs.push_back(msg);
        evaluateVerification(st, out);
    }
    drainReady(out);
}

void AgreementEngine::evaluateVerification(SlotState& st, EngineOutput& out) {
    if (st.committed || st.view >= 0 || st.vcView >= 0) return;
    if (!st.depPropose) return;

    Digest hdp = dpHash(*st.depPropose);
    const auto& f = st.depPropose->fastQuorum;
    for (auto it = st.pendingDvs.begin(); it != st.pendingDvs.end();) {
        const DepVerify& dv = *it;
        if (st.depVerifys.count(dv.sender_)) {
            it = st.pendingDvs.erase(it);
            continue;
        }
        if (dv.depProposeHash != hdp ||
            std::find(f.begin(), f.end(), dv.sender_) == f.end()) {
            ++stats_.droppedMessages;
            it = st.pendingDvs.erase(it);
            continue;
        }
        if (!depsAdmitted(dv.deps)) {
            ++it;  // wait gate pending
            continue;
        }
        st.depVerifys.emplace(dv.sender_, dv);
        ++mutations_;
        it = st.pendingDvs.erase(it);
    }

    if (st.depVerifys.size() < cfg_.fastQuorumSize()) return;

    // Verified: matching DepVerifys from the whole fast-path quorum.
    cancelTimer(st, kProposeTimer);
    st.proposeTimerResolved = true;

    std::vector<DepVerify> dvs = basisDvs(st);
    if (fastPathDepsRule(*st.depPropose, dvs, cfg_.maxFaulty)) {
        if (st.sentInitialPrepare) return;  // already reconciling; never also fast-commit
        if (st.step != SlotStep::FpVerified && st.step != SlotStep::FpCommitted) {
            st.step = SlotStep::FpVerified;
            Certificate fpc;
            fpc.kind = Certificate::Kind::Fpc;
            fpc.depPropose = st.depPropose;
            fpc.dvSet = dvs;
            fpc.view = kInitialView;
            st.fpc = std::move(fpc);
            ++mutations_;
        }
        if (!st.sentDepCommit) {
            st.sentDepCommit = true;
            DepCommit dc;
            dc.slot = st.slot;
            dc.sender_ = cfg_.id;
            dc.dvSetHash = dvSetHash(dvs);
            signMessage(*ring_, dc);
            broadcast(dc, out);
        }
        evaluateDepCommits(st, out);
    } else {
        enterReconciliation(st, out);
    }
    evaluatePrepares(st, out);
}

void AgreementEngine::enterReconciliation(SlotState& st, EngineOutput& out) {
    if (st.sentInitialPrepare || st.committed) return;
    if (st.sentDepCommit) {
        noteInvariantViolation(st.slot, "Prepare attempt after DepCommit in view -1", out);
        return;
    }
    st.sentInitialPrepare = true;
    st.step = SlotStep::RpVerified;
    st.sentPrepare.insert(kInitialView);
    ++mutations_;
    Prepare p;
    p.view = kInitialView;
    p.slot = st.slot;
    p.sender_ = cfg_.id;
    p.dvSetHash = dvSetHash(basisDvs(st));
    signMessage(*ring_, p);
    ++stats_.preparesSent;
    broadcast(p, out);
}

// ---------------------------------------------------------------------------
// DepCommit

void AgreementEngine::onDepCommit(const DepCommit& msg, EngineOutput& out) {
    if (coveredByBarrier(msg.slot)) return;
    if (!inOrderingWindow(msg.slot) || msg.sender_ >= cfg_.replicaCount) {
        ++stats_.droppedMessages;
        return;
    }
    SlotState& st = slotState(msg.slot);
    if (st.committed) return;
    st.depCommits.emplace(msg.sender_, msg);  // first per sender is binding
    evaluateDepCommits(st, out);
}

void AgreementEngine::evaluateDepCommits(SlotState& st, EngineOutput& out) {
    if (st.committed || st.view >= 0 || st.vcView >= 0) return;
    if (st.depVerifys.size() < cfg_.fastQuorumSize()) return;  // dv set unknown

    Digest own = dvSetHash(basisDvs(st));
    std::uint32_t matching = 0;
    for (const auto& [sender, dc] : st.depCommits)
        if (dc.dvSetHash == own) ++matching;
    if (matching < cfg_.quorum()) return;

    commitWithBasis(st, CommitPath::FastPath, out);
}

// ---------------------------------------------------------------------------
// Prepare / Commit

void AgreementEngine::onPrepare(const Prepare& msg, EngineOutput& out) {
    if (coveredByBarrier(msg.slot)) return;
    if (!inOrderingWindow(msg.slot) || msg.sender_ >= cfg_.replicaCount ||
        msg.view < kInitialView) {
        ++stats_.droppedMessages;
        return;
    }
    SlotState& st = slotState(msg.slot);
    if (st.committed) return;
    st.prepares[msg.view].emplace(msg.sender_, msg);
    evaluatePrepares(st, out);
}

void AgreementEngine::onCommit(const Commit& msg, EngineOutput& out) {
    if (coveredByBarrier(msg.slot)) return;
    if (!inOrderingWindow(msg.slot) || msg.sender_ >= cfg_.replicaCount ||
        msg.view < kInitialView) {
        ++stats_.droppedMessages;
        return;
    }
    SlotState& st = slotState(msg.slot);
    if (st.committed) return;
    st.commits[msg.view].emplace(msg.sender_, msg);
    evaluateCommits(st, out);
}

void AgreementEngine::evaluatePrepares(SlotState& st, EngineOutput& out) {
    if (st.committed) return;
    ViewNumber v = st.view;
    if (v < 0) {
        if (st.vcView >= 0) return;
        if (st.depVerifys.size() < cfg_.fastQuorumSize()) return;  // not verified
    } else if (st.basisPrepareGatePending) {
        return;  // installed dependencies not admitted yet
    }

    auto it = st.prepares.find(v);
    if (it == st.prepares.end()) return;
    Digest h = dvSetHash(basisDvs(st));
    std::vector<Prepare> witness;
    for (const auto& [sender, p] : it->second)
        if (p.dvSetHash == h && witness.size() < cfg_.quorum()) witness.push_back(p);
    if (witness.size() < cfg_.quorum()) return;

    if (st.step != SlotStep::RpPrepared) {
        st.step = SlotStep::RpPrepared;
        ++mutations_;
        Certificate rpc;
        rpc.kind = Certificate::Kind::Rpc;
        rpc.view = v;
        if (v < 0 || st.basisKind == NewView::Selection::Certified) rpc.depPropose = st.depPropose;
        rpc.dvSet = basisDvs(st);
        rpc.prepareSet = witness;
        if (!st.rpc || st.rpc->view < v) st.rpc = std::move(rpc);
    }
    if (!st.sentCommit.count(v)) {
        st.sentCommit.insert(v);
        Commit c;
        c.view = v;
        c.slot = st.slot;
        c.sender_ = cfg_.id;
        c.dvSetHash = h;
        signMessage(*ring_, c);
        broadcast(c, out);
    }
    evaluateCommits(st, out);
}

void AgreementEngine::evaluateCommits(SlotState& st, EngineOutput& out) {
    if (st.committed) return;
    ViewNumber v = st.view;
    if (v < 0) {
        if (st.vcView >= 0) return;
        if (st.depVerifys.size() < cfg_.fastQuorumSize()) return;
    } else if (st.basisPrepareGatePending) {
        return;
    }

    auto it = st.commits.find(v);
    if (it == st.commits.end()) return;
    Digest h = dvSetHash(basisDvs(st));
    std::uint32_t matching = 0;
    for (const auto& [sender, c] : it->second)
        if (c.dvSetHash == h) ++matching;
    if (matching < cfg_.quorum()) return;

    commitWithBasis(st, v < 0 ? CommitPath::Reconciliation : CommitPath::ViewChange, out);
}

// ---------------------------------------------------------------------------
// Basis helpers

std::vector<DepVerify> AgreementEngine::basisDvs(const SlotState& st) const {
    if (st.view >= 0) return st.installedDvs;
    std::vector<DepVerify> dvs;
    dvs.reserve(st.depVerifys.size());
    for (const auto& [sender, dv] : st.depVerifys) dvs.push_back(dv);
    return dvs;  // map iteration is already sender-ascending
}

DependencySet AgreementEngine::basisDeps(const SlotState& st) const {
    DependencySet deps;
    if (st.view >= 0 && st.basisKind == NewView::Selection::NoOp) return deps;
    if (st.view < 0 || st.basisKind == NewView::Selection::Certified) {
        if (st.depPropose) deps = st.depPropose->deps;
    }
    for (const auto& dv : basisDvs(st)) deps.mergeMax(dv.deps);
    return deps;
}

// ---------------------------------------------------------------------------
// Commit

void AgreementEngine::commitWithBasis(SlotState& st, CommitPath path, EngineOutput& out) {
    DependencySet deps = basisDeps(st);
    if (st.request) {
        Request req = *st.request;
        commitSlot(st, req, deps, path, out);
    } else if (!st.pendingContentCommit) {
        // Quorum complete but the request body never reached us; hold the
        // commit until the content arrives (retransmission, client broadcast
        // or Exec recovery).
        st.pendingContentCommit = {deps, path};
    }
}

void AgreementEngine::commitSlot(SlotState& st, const Request& request,
                                 const DependencySet& deps, CommitPath path, EngineOutput& out) {
    if (st.committed) return;
    st.committed = true;
    st.record = CommitRecord{st.slot, request, deps};
    st.path = path;
    st.commitView = st.view;
    st.pendingContentCommit.reset();
    ++mutations_;
    switch (path) {
        case CommitPath::FastPath:
            st.step = SlotStep::FpCommitted;
            ++stats_.fpCommits;
            break;
        case CommitPath::Reconciliation:
            st.step = SlotStep::RpCommitted;
            ++stats_.rpCommits;
            break;
        case CommitPath::ViewChange:
            st.step = SlotStep::RpCommitted;
            ++stats_.vcCommits;
            break;
        case CommitPath::Recovery:
            st.step = SlotStep::Committed;
            ++stats_.recoveryCommits;
            break;
    }
    cancelAllTimers(st);
    st.lastSent.clear();
    pendingDps_.erase(st.slot);
    st.pendingDvs.clear();

    if (request.isNoOp())
        index_->noteNoOp(st.slot);
    else
        index_->noteRequest(st.slot, request);

    auto recordClient = [&](const Request& r) {
        if (!r.isRegular()) return;
        auto [it, inserted] = committedTs_.try_emplace(r.client, r.timestamp);
        if (!inserted && it->second < r.timestamp) it->second = r.timestamp;
    };
    recordClient(request);
    for (const auto& m : request.members) recordClient(m);

    LocalEvent ev;
    ev.kind = LocalEvent::Kind::Committed;
    ev.slot = st.slot;
    ev.view = st.view;
    ev.path = path;
    ev.digest = digestOf(st.record->encoded());
    out.events.push_back(ev);
    out.commits.push_back({*st.record, path, st.view});

    // One of our own slots resolved as a no-op: propose the original request
    // again in a fresh slot with a rotated fast quorum.
    auto mine = ownProposalContent_.find(st.slot);
    if (mine != ownProposalContent_.end()) {
        Request original = mine->second;
        ownProposalContent_.erase(mine);
        if (request.isNoOp() && !requestFullyCommitted(original)) {
            auto cycle = fastQuorumCycle(cfg_.id, cfg_.replicaCount, cfg_.fastQuorumSize());
            std::vector<ReplicaId> prev = defaultFastQuorum();
            if (auto lit = lastQuorumUsed_.find(original.hash()); lit != lastQuorumUsed_.end())
                prev = lit->second;
            size_t idx = 0;
            for (size_t i = 0; i < cycle.size(); ++i)
                if (cycle[i] == prev) idx = (i + 1) % cycle.size();
            std::uint64_t needed = 1 + (nextOwnCounter_ % cfg_.cpInterval == 0 ? 1 : 0);
            if (nextOwnCounter_ + needed <= windowBase(cfg_.id) + cfg_.orderingWindow()) {
                if (nextOwnCounter_ % cfg_.cpInterval == 0)
                    proposeOne(Request::checkpointRequest(), defaultFastQuorum(), out);
                proposeOne(original, cycle[idx], out);
            }
        }
    }

    drainReady(out);
}

void AgreementEngine::finalizeCommit(SlotState& st, EngineOutput& out) {
    if (!st.pendingContentCommit || !st.request) return;
    auto [deps, path] = *st.pendingContentCommit;
    Request req = *st.request;
    commitSlot(st, req, deps, path, out);
}

// ---------------------------------------------------------------------------
// View change

Certificate AgreementEngine::bestCertificate(SlotState& st, EngineOutput& out) {
    (void)out;
    if (st.rpc) return *st.rpc;
    if (st.fpc) return *st.fpc;
    if (isCheckpointSlot(st.slot)) {
        Certificate crc;
        crc.kind = Certificate::Kind::CrcPart;
        crc.view = kInitialView;
        DepVerify aux;
        aux.slot = st.slot;
        aux.sender_ = cfg_.id;
        aux.depProposeHash = checkpointRequestHash();
        if (st.sentDvDeps)
            aux.deps = *st.sentDvDeps;
        else if (st.slot.coordinator == cfg_.id && st.depPropose)
            aux.deps = st.depPropose->deps;
        else
            aux.deps = checkpointAuxDeps(st.slot);
        signMessage(*ring_, aux);
        crc.auxDepVerify = std::move(aux);
        return crc;
    }
    return Certificate{};
}

DependencySet AgreementEngine::checkpointAuxDeps(const SlotId& slot) const {
    return mergeCompact(index_->conflictDeps(Request::checkpointRequest(), slot), stableBarrier_);
}

void AgreementEngine::startViewChange(SlotState& st, ViewNumber newView, EngineOutput& out) {
    if (st.committed || newView <= st.vcView || newView <= st.view) return;

    // A still unresolved proposal is forwarded once more (without the request
    // body) so every replica learns the slot exists.
    const DepPropose* dp = nullptr;
    if (st.depPropose && st.view < 0)
        dp = &*st.depPropose;
    else if (auto pit = pendingDps_.find(st.slot); pit != pendingDps_.end())
        dp = &pit->second;
    if (dp && !st.proposeTimerResolved) {
        DepPropose bare = *dp;
        bare.request.reset();
        out.messages.push_back({bare, Destination::broadcast()});
        st.proposeTimerResolved = true;
    }

    st.vcView = newView;
    st.step = SlotStep::ViewChange;
    ++mutations_;
    cancelTimer(st, kProposeTimer);
    cancelTimer(st, kCommitTimer);
    cancelTimer(st, kViewChangeTimer);

    LocalEvent ev;
    ev.kind = LocalEvent::Kind::ViewChangeStarted;
    ev.slot = st.slot;
    ev.view = newView;
    out.events.push_back(ev);

    ViewChange vc;
    vc.view = newView;
    vc.slot = st.slot;
    vc.sender_ = cfg_.id;
    vc.certificate = bestCertificate(st, out);
    signMessage(*ring_, vc);
    st.sentViewChange.insert(newView);
    armTimer(st, kQueryExecTimer, cfg_.queryExecTimeout(), out);
    broadcast(vc, out);
    drainReady(out);
}

void AgreementEngine::maybeJumpView(SlotState& st, EngineOutput& out) {
    // Adopt the f+1-highest view that others already reached.
    ViewNumber cur = std::max(st.view, st.vcView);
    std::vector<ViewNumber> higher;
    for (const auto& [rep, v] : st.knownViews)
        if (v > cur) higher.push_back(v);
    if (higher.size() < cfg_.maxFaulty + 1) return;
    std::sort(higher.rbegin(), higher.rend());
    ViewNumber target = higher[cfg_.maxFaulty];
    if (target > cur) startViewChange(st, target, out);
}

void AgreementEngine::onViewChange(const ViewChange& msg, EngineOutput& out) {
    if (coveredByBarrier(msg.slot)) return;
    if (!inOrderingWindow(msg.slot) || msg.sender_ >= cfg_.replicaCount || msg.view < 0) {
        ++stats_.droppedMessages;
        return;
    }
    SlotState& st = slotState(msg.slot);
    if (st.committed) return;
    if (!validateCertificate(*ring_, cfg_, msg.slot, msg.certificate)) {
        ++stats_.droppedMessages;
        return;
    }

    st.viewChanges[msg.view].emplace(msg.sender_, msg);
    auto [kit, kinserted] = st.knownViews.try_emplace(msg.sender_, msg.view);
    if (!kinserted && kit->second < msg.view) kit->second = msg.view;
    bool newSender = st.vcSenders.insert(msg.sender_).second;
    if (newSender) ++mutations_;

    maybeJumpView(st, out);

    // Once 2f+1 replicas reached this view a correct coordinator can compute
    // the NewView, so its absence must escalate after the timeout.
    if (st.vcView >= 0 && st.view < st.vcView) {
        auto pit = st.viewChanges.find(st.vcView);
        if (pit != st.viewChanges.end() && pit->second.size() >= cfg_.quorum() &&
            !st.nvTimerArmedFor.count(st.vcView)) {
            st.nvTimerArmedFor.insert(st.vcView);
            armTimer(st, kViewChangeTimer, cfg_.viewChangeTimeout(), out);
        }
    }

    tryComputeNewView(st, out);
    drainReady(out);
}

namespace {

// Deterministic certificate selection over a view-change set: RPC for the
// highest view first, then FPC, then (checkpoint slots) the CRC assembled
// from the auxiliary DepVerifys, then a no-op. Ties resolve to the lowest
// sender id.
struct NewViewSelection {
    NewView::Selection kind = NewView::Selection::NoOp;
    std::optional<DepPropose> depPropose;
    std::vector<DepVerify> dvSet;
    bool needMoreCrcParts = false;
};

NewViewSelection selectFromViewChanges(const std::map<ReplicaId, ViewChange>& pool,
                                       std::uint32_t quorum, bool cpSlot) {
    NewViewSelection sel;
    const Certificate* bestRpc = nullptr;
    const Certificate* bestFpc = nullptr;
    for (const auto& [sender, vc] : pool) {  // ascending sender: first wins ties
        const Certificate& c = vc.certificate;
        if (c.kind == Certificate::Kind::Rpc) {
            if (!bestRpc || c.view > bestRpc->view) bestRpc = &c;
        } else if (c.kind == Certificate::Kind::Fpc) {
            if (!bestFpc) bestFpc = &c;
        }
    }
    if (bestRpc) {
        if (bestRpc->depPropose) {
            sel.kind = NewView::Selection::Certified;
            sel.depPropose = bestRpc->depPropose;
            sel.dvSet = bestRpc->dvSet;
        } else if (!bestRpc->dvSet.empty()) {
            sel.kind = NewView::Selection::CheckpointCrc;
            sel.dvSet = bestRpc->dvSet;
        } else {
            sel.kind = NewView::Selection::NoOp;
        }
        sortBySender(sel.dvSet);
        return sel;
    }
    if (bestFpc) {
        sel.kind = NewView::Selection::Certified;
        sel.depPropose = bestFpc->depPropose;
        sel.dvSet = bestFpc->dvSet;
        sortBySender(sel.dvSet);
        return sel;
    }
    if (cpSlot) {
        sel.kind = NewView::Selection::CheckpointCrc;
        for (const auto& [sender, vc] : pool)
            if (vc.certificate.kind == Certificate::Kind::CrcPart && sel.dvSet.size() < quorum)
                sel.dvSet.push_back(*vc.certificate.auxDepVerify);
        if (sel.dvSet.size() < quorum) sel.needMoreCrcParts = true;
        sortBySender(sel.dvSet);
        return sel;
    }
    sel.kind = NewView::Selection::NoOp;
    return sel;
}

}  // namespace

void AgreementEngine::tryComputeNewView(SlotState& st, EngineOutput& out) {
    ViewNumber v = st.vcView;
    if (v < 0 || st.committed || st.view >= v) return;
    if (viewCoordinator(st.slot, v, cfg_.replicaCount) != cfg_.id) return;
    auto poolIt = st.viewChanges.find(v);
    if (poolIt == st.viewChanges.end() || poolIt->second.size() < cfg_.quorum()) return;

    NewViewSelection sel =
        selectFromViewChanges(poolIt->second, cfg_.quorum(), isCheckpointSlot(st.slot));
    if (sel.needMoreCrcParts) {
        st.crcComputePending = true;
        return;
    }
    if (sel.kind == NewView::Selection::CheckpointCrc) {
        // The auxiliary dependency sets must pass the wait gate before use.
        for (const auto& dv : sel.dvSet)
            if (!depsAdmitted(dv.deps)) {
                st.crcComputePending = true;
                return;
            }
    }
    st.crcComputePending = false;

    // Assemble 2f+1 view changes witnessing the selection.
    std::vector<ViewChange> vcs;
    auto pick = [&](auto pred) {
        for (const auto& [sender, vc] : poolIt->second) {
            if (vcs.size() >= cfg_.quorum()) break;
            bool have = false;
            for (const auto& w : vcs)
                if (w.sender_ == sender) have = true;
            if (!have && pred(vc)) vcs.push_back(vc);
        }
    };
    bool haveRpc = false;
    ViewNumber bestRpcView = kInitialView;
    for (const auto& [sender, vc] : poolIt->second)
        if (vc.certificate.kind == Certificate::Kind::Rpc) {
            haveRpc = true;
            bestRpcView = std::max(bestRpcView, vc.certificate.view);
        }
    if (haveRpc) {
        pick([&](const ViewChange& vc) {
            return vc.certificate.kind == Certificate::Kind::Rpc &&
                   vc.certificate.view == bestRpcView;
        });
        if (!vcs.empty()) vcs.resize(1);
        pick([](const ViewChange&) { return true; });
    } else if (sel.kind == NewView::Selection::Certified) {
        pick([](const ViewChange& vc) { return vc.certificate.kind == Certificate::Kind::Fpc; });
        if (!vcs.empty()) vcs.resize(1);
        pick([](const ViewChange&) { return true; });
    } else if (sel.kind == NewView::Selection::CheckpointCrc) {
        pick([](const ViewChange& vc) {
            return vc.certificate.kind == Certificate::Kind::CrcPart;
        });
    } else {
        pick([](const ViewChange&) { return true; });
    }
    if (vcs.size() < cfg_.quorum()) return;

    NewView nv;
    nv.view = v;
    nv.slot = st.slot;
    nv.coordinator = cfg_.id;
    nv.selection = sel.kind;
    nv.depPropose = sel.depPropose;
    nv.dvSet = sel.dvSet;
    nv.viewChangeSet = std::move(vcs);
    signMessage(*ring_, nv);
    broadcast(nv, out);
}

void AgreementEngine::onNewView(const NewView& msg, EngineOutput& out) {
    if (coveredByBarrier(msg.slot)) return;
    if (!inOrderingWindow(msg.slot) || msg.view < 0 ||
        msg.coordinator != viewCoordinator(msg.slot, msg.view, cfg_.replicaCount)) {
        ++stats_.droppedMessages;
        return;
    }
    SlotState& st = slotState(msg.slot);
    if (st.committed || msg.view <= st.view) return;

    if (msg.viewChangeSet.size() != cfg_.quorum()) {
        ++stats_.droppedMessages;
        return;
    }
    std::map<ReplicaId, ViewChange> pool;
    for (const auto& vc : msg.viewChangeSet) {
        if (vc.slot != msg.slot || vc.view != msg.view || !verifySignedMessage(*ring_, vc) ||
            !validateCertificate(*ring_, cfg_, msg.slot, vc.certificate) ||
            !pool.emplace(vc.sender_, vc).second) {
            ++stats_.droppedMessages;
            return;
        }
    }

    NewViewSelection expect =
        selectFromViewChanges(pool, cfg_.quorum(), isCheckpointSlot(msg.slot));
    bool matches = !expect.needMoreCrcParts && expect.kind == msg.selection;
    if (matches) {
        std::vector<DepVerify> gotDvs = msg.dvSet;
        sortBySender(gotDvs);
        matches = dvSetHash(gotDvs) == dvSetHash(expect.dvSet);
        if (matches && expect.kind == NewView::Selection::Certified) {
            matches = msg.depPropose && expect.depPropose &&
                      dpHash(*msg.depPropose) == dpHash(*expect.depPropose);
            if (matches && msg.depPropose->request &&
                (msg.depPropose->request->hash() != msg.depPropose->requestHash ||
                 !verifyRequestSignature(*ring_, *msg.depPropose->request)))
                matches = false;
        }
    }
    if (!matches) {
        // Selection-rule violation; reject and let the escalation timer run.
        ++stats_.droppedMessages;
        return;
    }

    // The embedded view changes justify following the coordinator here even
    // if our own view change never started.
    for (const auto& [sender, vc] : pool) {
        st.viewChanges[msg.view].emplace(sender, vc);
        auto [kit, kinserted] = st.knownViews.try_emplace(sender, msg.view);
        if (!kinserted && kit->second < msg.view) kit->second = msg.view;
        st.vcSenders.insert(sender);
    }
    installNewView(st, msg, out);
}

void AgreementEngine::installNewView(SlotState& st, const NewView& msg, EngineOutput& out) {
    st.view = msg.view;
    if (st.vcView < msg.view) st.vcView = msg.view;
    st.newViewSeen = true;
    st.basisKind = msg.selection;
    st.depPropose = msg.depPropose;
    st.installedDvs = msg.dvSet;
    sortBySender(st.installedDvs);
    st.step = SlotStep::RpVerified;
    st.crcComputePending = false;
    ++mutations_;

    switch (msg.selection) {
        case NewView::Selection::Certified:
            if (msg.depPropose->request) {
                st.request = msg.depPropose->request;
                index_->noteRequest(st.slot, *st.request);
            } else if (!st.request) {
                contentWaiters_[msg.depPropose->requestHash].insert(st.slot);
            }
            break;
        case NewView::Selection::CheckpointCrc:
            st.request = Request::checkpointRequest();
            index_->noteRequest(st.slot, *st.request);
            break;
        case NewView::Selection::NoOp:
            st.request = Request::noOp();
            break;
    }

    // Old-basis retransmission stops once a view installs.
    st.lastSent.erase(MsgTag::DepPropose);
    st.lastSent.erase(MsgTag::DepVerify);
    st.lastSent.erase(MsgTag::DepCommit);
    pendingDps_.erase(st.slot);
    st.pendingDvs.clear();

    cancelTimer(st, kViewChangeTimer);
    cancelTimer(st, kQueryExecTimer);
    cancelTimer(st, kProposeTimer);
    armTimer(st, kCommitTimer, cfg_.vcCommitTimeout(), out);

    LocalEvent ev;
    ev.kind = LocalEvent::Kind::NewViewInstalled;
    ev.slot = st.slot;
    ev.view = st.view;
    out.events.push_back(ev);

    st.basisPrepareGatePending = true;
    sendPrepareForBasis(st, out);
    drainReady(out);
}

void AgreementEngine::sendPrepareForBasis(SlotState& st, EngineOutput& out) {
    if (!st.basisPrepareGatePending || st.committed) return;
    if (!depsAdmitted(basisDeps(st))) return;
    st.basisPrepareGatePending = false;
    ++mutations_;
    ViewNumber v = st.view;
    if (!st.sentPrepare.count(v)) {
        st.sentPrepare.insert(v);
        Prepare p;
        p.view = v;
        p.slot = st.slot;
        p.sender_ = cfg_.id;
        p.dvSetHash = dvSetHash(basisDvs(st));
        signMessage(*ring_, p);
        ++stats_.preparesSent;
        broadcast(p, out);
    }
    evaluatePrepares(st, out);
    evaluateCommits(st, out);
}

// ---------------------------------------------------------------------------
// Recovery

void AgreementEngine::onQueryExec(const QueryExec& msg, EngineOutput& out) {
    if (msg.sender_ >= cfg_.replicaCount || msg.sender_ == cfg_.id) return;
    const SlotState* st = findSlot(msg.slot);
    if (!st || !st->committed || !st->record) return;
    ExecInfo info;
    info.slot = msg.slot;
    info.sender_ = cfg_.id;
    info.request = st->record->request;
    info.deps = st->record->deps;
    signMessage(*ring_, info);
    sendTo(msg.sender_, info, out);
}

void AgreementEngine::onExecInfo(const ExecInfo& msg, EngineOutput& out) {
    if (coveredByBarrier(msg.slot)) return;
    if (!inOrderingWindow(msg.slot) || msg.sender_ >= cfg_.replicaCount) {
        ++stats_.droppedMessages;
        return;
    }
    SlotState& st = slotState(msg.slot);
    if (st.committed) return;

    // One report per sender; the first claim is binding.
    for (const auto& [bucket, senders] : st.execReports)
        if (senders.count(msg.sender_)) return;
    Encoder key;
    key.digest(msg.request.hash());
    msg.deps.encode(key);
    Digest bucket = digestOf(key.result());
    auto& reports = st.execReports[bucket];
    reports.emplace(msg.sender_, msg);
    if (reports.size() < cfg_.maxFaulty + 1) return;
    if (!verifyRequestSignature(*ring_, msg.request)) {
        ++stats_.droppedMessages;
        return;
    }
    commitSlot(st, msg.request, msg.deps, CommitPath::Recovery, out);
}

void AgreementEngine::onRequestContent(const Request& request, EngineOutput& out,
                                       bool fromProposal) {
    if (!request.isRegular() && !request.isBatch()) return;
    auto it = contentWaiters_.find(request.hash());
    if (it == contentWaiters_.end()) return;
    std::set<SlotId> waiters = std::move(it->second);
    contentWaiters_.erase(it);
    for (const auto& slot : waiters) {
        SlotState* st = findSlot(slot);
        if (!st || st->request) continue;
        if (!st->depPropose || st->depPropose->requestHash != request.hash()) continue;
        st->request = request;
        st->depPropose->request = request;
        index_->noteRequest(slot, request);
        ++mutations_;
        if (st->needsDvAfterContent && fromProposal) {
            st->needsDvAfterContent = false;
            maybeSendDepVerify(*st, out);
        }
        finalizeCommit(*st, out);
        evaluateVerification(*st, out);
    }
    drainReady(out);
}

// ---------------------------------------------------------------------------
// Timers

bool AgreementEngine::onTimer(std::uint64_t token, EngineOutput& out) {
    if (token == retransmitToken_) {
        retransmitToken_ = 0;
        bool outstanding = !pendingDps_.empty();
        for (auto& [slot, st] : slots_) {
            if (st.committed || st.lastSent.empty()) continue;
            outstanding = true;
            for (const auto& [tag, msg] : st.lastSent)
                out.messages.push_back({msg, Destination::broadcast()});
        }
        if (outstanding) ensureRetransmitTimer(out);
        return true;
    }

    auto it = timerTargets_.find(token);
    if (it == timerTargets_.end()) return false;
    auto [slot, kind] = it->second;
    timerTargets_.erase(it);
    SlotState* stp = findSlot(slot);
    if (!stp) return true;
    SlotState& st = *stp;
    if (st.timers[kind] == token) st.timers[kind] = 0;
    if (st.committed) return true;

    switch (kind) {
        case kProposeTimer: {
            if (st.proposeTimerResolved) break;
            st.proposeTimerResolved = true;
            const DepPropose* dp = nullptr;
            if (st.depPropose)
                dp = &*st.depPropose;
            else if (auto pit = pendingDps_.find(slot); pit != pendingDps_.end())
                dp = &pit->second;
            if (dp) {
                // Forward the proposal without the request body so everyone
                // learns the slot exists.
                DepPropose bare = *dp;
                bare.request.reset();
                out.messages.push_back({bare, Destination::broadcast()});
            }
            break;
        }
        case kCommitTimer:
            startViewChange(st, std::max(st.view, st.vcView) + 1, out);
            break;
        case kViewChangeTimer:
            startViewChange(st, st.vcView + 1, out);
            break;
        case kQueryExecTimer: {
            bool stalledVc = !st.sentViewChange.empty() && st.view < st.vcView;
            bool stalledDep = queryWaiters_.count(slot) > 0 && !depAdmitted(slot);
            bool stalledExec = execBlockers_.count(slot) > 0;
            if (stalledVc || stalledDep || stalledExec) {
                QueryExec q;
                q.slot = slot;
                q.sender_ = cfg_.id;
                signMessage(*ring_, q);
                out.messages.push_back({q, Destination::broadcast()});
                armTimer(st, kQueryExecTimer, cfg_.queryExecTimeout(), out);
            }
            break;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// Drain loop: retries everything blocked on the wait gate.

void AgreementEngine::drainReady(EngineOutput& out) {
    if (draining_) {
        drainRequested_ = true;
        return;
    }
    draining_ = true;
    bool again = true;
    while (again) {
        drainRequested_ = false;
        std::uint64_t before = mutations_;

        // Blocked proposals, in slot order: the gap rule plus the wait gate.
        for (auto it = pendingDps_.begin(); it != pendingDps_.end();) {
            const SlotId slot = it->first;
            SlotState& st = slotState(slot);
            if (st.committed || st.view >= 0 || st.vcView >= 0 || st.dpProcessed) {
                it = pendingDps_.erase(it);
                ++mutations_;
                continue;
            }
            if (predecessorAdmitted(slot) && depsAdmitted(it->second.deps)) {
                DepPropose dp = std::move(it->second);
                it = pendingDps_.erase(it);
                processDepPropose(st, dp, out);
                it = pendingDps_.upper_bound(slot);  // handlers may mutate the map
                continue;
            }
            ++it;
        }

        for (auto& [slot, st] : slots_) {
            if (st.committed) continue;
            if (!st.pendingDvs.empty() && st.dpProcessed && st.view < 0 && st.vcView < 0)
                evaluateVerification(st, out);
            if (st.basisPrepareGatePending) sendPrepareForBasis(st, out);
            if (st.crcComputePending) tryComputeNewView(st, out);
        }

        again = drainRequested_ || mutations_ != before;
    }

    // Track dependencies that still block progress; each gets a QueryExec
    // timer so a replica that missed a commit (or was restored from a
    // checkpoint) asks around instead of waiting forever.
    std::set<SlotId> blockers;
    auto collect = [&](const DependencySet& deps) {
        for (const auto& [rep, cnt] : deps.entries()) {
            SlotId d{rep, cnt};
            if (inOrderingWindow(d) && !depAdmitted(d)) blockers.insert(d);
        }
    };
    for (const auto& [slot, dp] : pendingDps_) {
        collect(dp.deps);
        if (slot.counter > 0) {
            SlotId pred{slot.coordinator, slot.counter - 1};
            if (!depAdmitted(pred)) blockers.insert(pred);
        }
    }
    for (auto& [slot, st] : slots_) {
        if (st.committed) continue;
        if (st.basisPrepareGatePending) collect(basisDeps(st));
        if (st.crcComputePending) {
            auto poolIt = st.viewChanges.find(st.vcView);
            if (poolIt != st.viewChanges.end())
                for (const auto& [sender, vc] : poolIt->second)
                    if (vc.certificate.auxDepVerify) collect(vc.certificate.auxDepVerify->deps);
        }
        for (const auto& pdv : st.pendingDvs) collect(pdv.deps);
    }
    queryWaiters_ = blockers;
    for (const auto& d : blockers) {
        SlotState& st = slotState(d);
        if (!st.committed && !st.timers[kQueryExecTimer])
            armTimer(st, kQueryExecTimer, cfg_.queryExecTimeout(), out);
    }
    draining_ = false;
}

void AgreementEngine::noteExecutionBlockers(const std::set<SlotId>& blockers,
                                            EngineOutput& out) {
    execBlockers_.clear();
    for (const auto& d : blockers) {
        if (coveredByBarrier(d) || !inOrderingWindow(d)) continue;
        SlotState& st = slotState(d);
        if (st.committed) continue;
        execBlockers_.insert(d);
        if (!st.timers[kQueryExecTimer])
            armTimer(st, kQueryExecTimer, cfg_.queryExecTimeout(), out);
    }
}

// ---------------------------------------------------------------------------
// Checkpoint integration

void AgreementEngine::onStableCheckpoint(const DependencySet& barrier, EngineOutput& out) {
    stableBarrier_.mergeMax(barrier);
    for (auto it = slots_.begin(); it != slots_.end();) {
        if (stableBarrier_.covers(it->first)) {
            cancelAllTimers(it->second);
            ownProposalContent_.erase(it->first);
            it = slots_.erase(it);
        } else {
            ++it;
        }
    }
    for (auto it = pendingDps_.begin(); it != pendingDps_.end();) {
        if (stableBarrier_.covers(it->first))
            it = pendingDps_.erase(it);
        else
            ++it;
    }
    index_->prune(stableBarrier_);
    ++mutations_;
    drainReady(out);
}

void AgreementEngine::applyRestoredBarrier(const DependencySet& barrier, EngineOutput& out) {
    auto own = barrier.counterFor(cfg_.id);
    if (own && *own >= nextOwnCounter_) nextOwnCounter_ = *own + 1;
    onStableCheckpoint(barrier, out);
}

void AgreementEngine::noteInvariantViolation(const SlotId& slot, const std::string& what,
                                             EngineOutput& out) {
    ++stats_.invariantViolations;
    LocalEvent ev;
    ev.kind = LocalEvent::Kind::InvariantViolation;
    ev.slot = slot;
    ev.note = what;
    out.events.push_back(ev);
}

}  // namespace peerbft
