#include "peerbft/checkpoint.hpp"

namespace peerbft {

Digest CheckpointManager::voteKey(const CheckpointMsg& msg) const {
    Encoder enc;
    enc.u64(msg.seq);
    msg.barrier.encode(enc);
    enc.digest(msg.stateHash);
    return digestOf(enc.result());
}

CheckpointOutcome CheckpointManager::takeCheckpoint(const CheckpointPoint& point,
                                                    Application& app, EngineOutput& out) {
    CheckpointRecord rec;
    rec.seq = ++localSeq_;
    rec.barrier = point.barrier;
    rec.snapshot = app.snapshot();
    rec.stateHash = digestOf(rec.snapshot);
    records_[rec.seq] = rec;

    CheckpointMsg vote;
    vote.seq = rec.seq;
    vote.sender_ = cfg_.id;
    vote.barrier = rec.barrier;
    vote.stateHash = rec.stateHash;
    signMessage(*ring_, vote);

    LocalEvent ev;
    ev.kind = LocalEvent::Kind::CheckpointTaken;
    ev.seq = rec.seq;
    ev.digest = rec.stateHash;
    out.events.push_back(ev);
    CheckpointRecord logged = rec;
    logged.snapshot.clear();
    log_.push_back(std::move(logged));

    out.messages.push_back({vote, Destination::broadcast()});
    return onCheckpointMsg(vote, out);  // count our own vote
}

CheckpointOutcome CheckpointManager::onCheckpointMsg(const CheckpointMsg& msg,
                                                     EngineOutput& out) {
    if (msg.sender_ >= cfg_.replicaCount || msg.seq == 0) return {};
    if (msg.seq <= stableSeq_) return {};
    auto& senders = voted_[msg.seq];
    if (!senders.insert(msg.sender_).second) return {};  // first vote per sender binds

    auto& bucket = votes_[msg.seq][voteKey(msg)];
    if (bucket.votes.empty()) bucket.exemplar = msg;
    bucket.votes.emplace(msg.sender_, msg);
    return checkStability(msg.seq, out);
}

CheckpointOutcome CheckpointManager::checkStability(std::uint64_t seq, EngineOutput& out) {
    CheckpointOutcome outcome;
    auto seqIt = votes_.find(seq);
    if (seqIt == votes_.end()) return outcome;
    for (auto& [key, bucket] : seqIt->second) {
        if (bucket.votes.size() < cfg_.quorum()) continue;

        auto rec = records_.find(seq);
        bool haveMatching = false;
        if (rec != records_.end()) {
            CheckpointMsg own;
            own.seq = seq;
            own.barrier = rec->second.barrier;
            own.stateHash = rec->second.stateHash;
            haveMatching = voteKey(own) == key;
        }
        if (haveMatching) {
            stableSeq_ = seq;
            stableBarrier_.mergeMax(bucket.exemplar.barrier);
            stableVotes_.clear();
            for (const auto& [sender, v] : bucket.votes) {
                if (stableVotes_.size() >= cfg_.quorum()) break;
                stableVotes_.push_back(v);
            }
            // Everything older than the stable checkpoint can go.
            records_.erase(records_.begin(), records_.find(seq));
            votes_.erase(votes_.begin(), seqIt);
            votes_.erase(seq);
            voted_.erase(voted_.begin(), voted_.upper_bound(seq));

            LocalEvent ev;
            ev.kind = LocalEvent::Kind::CheckpointStable;
            ev.seq = seq;
            ev.digest = bucket.exemplar.stateHash;
            out.events.push_back(ev);
            outcome.stable = {stableBarrier_, seq};
            return outcome;
        }
        // A quorum vouches for a checkpoint we have not produced: catch up.
        if (seq > localSeq_ && seq > pendingExternalSeq_) {
            pendingExternalSeq_ = seq;
            outcome.externalStable = seq;
        }
    }
    return outcome;
}

void CheckpointManager::onFetchReq(const CheckpointFetchReq& msg, EngineOutput& out) {
    if (msg.sender_ >= cfg_.replicaCount || msg.sender_ == cfg_.id) return;
    if (stableSeq_ == 0 || stableSeq_ <= msg.sinceSeq) return;
    auto rec = records_.find(stableSeq_);
    if (rec == records_.end()) return;

    CheckpointFetchResp resp;
    resp.sender_ = cfg_.id;
    resp.seq = stableSeq_;
    resp.votes = stableVotes_;
    resp.snapshot = rec->second.snapshot;
    signMessage(*ring_, resp);
    out.messages.push_back({resp, Destination::to(msg.sender_)});
}

std::optional<DependencySet> CheckpointManager::onFetchResp(const CheckpointFetchResp& msg,
                                                            Application& app) {
    if (msg.seq <= localSeq_ || msg.seq <= stableSeq_) return std::nullopt;
    if (msg.votes.size() < cfg_.quorum()) return std::nullopt;
    std::set<ReplicaId> senders;
    std::optional<Digest> key;
    for (const auto& v : msg.votes) {
        if (v.seq != msg.seq || v.sender_ >= cfg_.replicaCount) return std::nullopt;
        if (!senders.insert(v.sender_).second) return std::nullopt;
        if (!verifySignedMessage(*ring_, v)) return std::nullopt;
        Digest k = voteKey(v);
        if (key && *key != k) return std::nullopt;  // votes must match
        key = k;
    }
    const CheckpointMsg& exemplar = msg.votes.front();
    if (digestOf(msg.snapshot) != exemplar.stateHash) return std::nullopt;
    if (!app.restore(ByteSpan(msg.snapshot.data(), msg.snapshot.size()))) return std::nullopt;

    localSeq_ = msg.seq;
    stableSeq_ = msg.seq;
    stableBarrier_.mergeMax(exemplar.barrier);
    stableVotes_ = msg.votes;
    CheckpointRecord rec;
    rec.seq = msg.seq;
    rec.barrier = exemplar.barrier;
    rec.stateHash = exemplar.stateHash;
    rec.snapshot = msg.snapshot;
    records_.clear();
    records_[msg.seq] = std::move(rec);
    votes_.erase(votes_.begin(), votes_.upper_bound(msg.seq));
    voted_.erase(voted_.begin(), voted_.upper_bound(msg.seq));
    if (pendingExternalSeq_ <= msg.seq) pendingExternalSeq_ = 0;
    CheckpointRecord logged;
    logged.seq = msg.seq;
    logged.barrier = exemplar.barrier;
    logged.stateHash = exemplar.stateHash;
    log_.push_back(std::move(logged));
    return stableBarrier_;
}

void CheckpointManager::requestFetch(EngineOutput& out) {
    // Any replica with a stable checkpoint can serve; rotate through them.
    ReplicaId target = nextProvider_;
    do {
        target = (target + 1) % cfg_.replicaCount;
    } while (target == cfg_.id);
    nextProvider_ = target;

    CheckpointFetchReq req;
    req.sinceSeq = localSeq_;
    req.sender_ = cfg_.id;
    signMessage(*ring_, req);
    out.messages.push_back({req, Destination::to(target)});
}

}  // namespace peerbft
