#include "peerbft/client.hpp"

namespace peerbft {

ClientSession::Output ClientSession::submit(Bytes operation) {
    Output out;
    if (pending_) return out;  // closed loop: one in-flight request only

    Request req = makeSignedRequest(ring_, cfg_.id, nextTimestamp_++, std::move(operation));
    pending_ = Pending{req, {}, {}, 0};

    ClientSubmit msg{req};
    out.messages.push_back({msg, Destination::to(cfg_.homeReplica)});
    if (cfg_.retransmitEnabled) {
        pending_->retryToken = ++tokenCounter_;
        out.timers.push_back({pending_->retryToken, cfg_.retryFactor * cfg_.delta});
    }
    return out;
}

ClientSession::Output ClientSession::onReply(const Reply& reply) {
    Output out;
    if (!pending_) return out;
    if (reply.client != cfg_.id || reply.clientTimestamp != pending_->request.timestamp)
        return out;  // stale or foreign
    if (reply.sender_ >= cfg_.replicaCount) return out;
    if (!verifySignedMessage(ring_, reply)) return out;

    // Results are matched by digest so large reads stay cheap.
    Digest d = digestOf(reply.result);
    auto& senders = pending_->tallies[d];
    senders.insert(reply.sender_);
    pending_->resultSample.emplace(d, reply.result);
    if (senders.size() >= cfg_.maxFaulty + 1) {
        out.accepted = AcceptedResult{pending_->request.timestamp, pending_->resultSample[d]};
        pending_.reset();
    }
    return out;
}

ClientSession::Output ClientSession::onTimer(std::uint64_t token) {
    Output out;
    if (!pending_ || pending_->retryToken != token) return out;
    // Silence past the timeout: broadcast the request to every replica so a
    // correct coordinator picks it up.
    ClientSubmit msg{pending_->request};
    for (ReplicaId r = 0; r < cfg_.replicaCount; ++r)
        out.messages.push_back({msg, Destination::to(r)});
    pending_->retryToken = ++tokenCounter_;
    out.timers.push_back({pending_->retryToken, cfg_.retryFactor * cfg_.delta});
    return out;
}

}  // namespace peerbft
