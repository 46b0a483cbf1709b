#pragma once

#include <atomic>

#include "peerbft/replica.hpp"
#include "peerbft/transport/frame.hpp"

namespace peerbft::transport {

struct PeerAddress {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;
};

struct NodeConfig {
    ReplicaConfig replica;
    std::string listenHost = "127.0.0.1";
    std::uint16_t listenPort = 0;  // 0: ephemeral, see boundPort()
    std::map<ReplicaId, PeerAddress> peers;
    size_t maxFrame = kDefaultMaxFrame;
};

// Single-threaded socket runner: the deterministic replica core driven by
// framed point-to-point streams, with reconnect backoff. All I/O and timers
// funnel through one poll loop, so event delivery stays serialized.
class Node {
  public:
    Node(const NodeConfig& cfg, Keyring ring, std::unique_ptr<Application> app);
    ~Node();

    std::uint16_t boundPort() const { return boundPort_; }
    void setPeers(std::map<ReplicaId, PeerAddress> peers) { cfg_.peers = std::move(peers); }

    // Blocks until `stop` becomes true.
    void run(std::atomic<bool>& stop);

    // Test hook: forcibly closes every open connection; reconnect and
    // retransmission must recover.
    void dropConnections() { dropRequested_ = true; }

    const Replica& replica() const { return replica_; }

  private:
    struct Conn {
        int fd = -1;
        FrameReader reader;
        Bytes sendQueue;
        bool connecting = false;     // non-blocking connect in flight
        std::optional<ReplicaId> peer;  // known for outbound peer links
        std::optional<ClientId> client;
    };

    void openListener();
    void ensurePeerConnection(ReplicaId peer, Micros now);
    void queueFrame(Conn& conn, const ProtocolMessage& msg);
    void routeOutput(StepOutput&& out, Micros now);
    void handleFrames(size_t connIdx, std::vector<Bytes>& frames, Micros now);
    void closeConn(size_t idx);
    Micros monotonicNow() const;

    NodeConfig cfg_;
    Keyring ring_;
    Replica replica_;
    int listenFd_ = -1;
    std::uint16_t boundPort_ = 0;
    std::vector<Conn> conns_;
    std::map<ReplicaId, size_t> peerConn_;   // peer id -> conns_ index
    std::map<ClientId, size_t> clientConn_;  // last connection a client used
    std::map<ReplicaId, Micros> reconnectAt_;
    std::multimap<Micros, std::uint64_t> timers_;  // deadline -> token
    std::atomic<bool> dropRequested_{false};
};

}  // namespace peerbft::transport
