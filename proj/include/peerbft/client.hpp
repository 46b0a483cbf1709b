#pragma once

#include "peerbft/agreement.hpp"

namespace peerbft {

struct ClientConfig {
    ClientId id = 0;
    ReplicaId homeReplica = 0;
    std::uint32_t replicaCount = 4;
    std::uint32_t maxFaulty = 1;
    Micros delta = 200'000;
    int retryFactor = 4;           // broadcast the request after retryFactor * delta
    bool retransmitEnabled = true;
};

// Closed-loop client session: one request in flight, submitted to the nearest
// (home) replica, accepted on f+1 matching replies, rebroadcast to everyone
// after a timeout.
class ClientSession {
  public:
    struct AcceptedResult {
        Timestamp timestamp = 0;
        Bytes result;
    };

    struct Output {
        std::vector<Outbound> messages;
        std::vector<TimerRequest> timers;
        std::optional<AcceptedResult> accepted;
    };

    ClientSession(const ClientConfig& cfg, Keyring ring)
        : cfg_(cfg), ring_(std::move(ring)) {}

    bool idle() const { return !pending_.has_value(); }
    Timestamp nextTimestamp() const { return nextTimestamp_; }

    // Rejected (empty output, no send) while a request is still in flight.
    Output submit(Bytes operation);
    Output onReply(const Reply& reply);
    Output onTimer(std::uint64_t token);

  private:
    struct Pending {
        Request request;
        std::map<Digest, std::set<ReplicaId>> tallies;
        std::map<Digest, Bytes> resultSample;
        std::uint64_t retryToken = 0;
    };

    ClientConfig cfg_;
    Keyring ring_;
    Timestamp nextTimestamp_ = 1;
    std::uint64_t tokenCounter_ = 0;
    std::optional<Pending> pending_;
};

}  // namespace peerbft
