#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <set>
#include <thread>

#include "peerbft/app/kvstore.hpp"
#include "peerbft/transport/node.hpp"
#include "testutil.hpp"

using namespace peerbft;
using namespace peerbft::transport;

TEST_CASE("frame codec: round trip, split reads, back-to-back frames") {
    testutil::Rand rnd(5150);
    FrameReader reader;
    std::vector<Bytes> frames;

    ProtocolMessage m1 = rnd.message();
    ProtocolMessage m2 = rnd.message();
    Bytes wire = encodeFrame(m1);
    Bytes wire2 = encodeFrame(m2);
    wire.insert(wire.end(), wire2.begin(), wire2.end());

    size_t third = wire.size() / 3;
    CHECK(reader.feed(ByteSpan(wire.data(), third), frames));
    CHECK(frames.size() <= 1);
    CHECK(reader.feed(ByteSpan(wire.data() + third, wire.size() - third), frames));
    REQUIRE(frames.size() == 2);
    CHECK(decodeMessage(ByteSpan(frames[0].data(), frames[0].size())) == m1);
    CHECK(decodeMessage(ByteSpan(frames[1].data(), frames[1].size())) == m2);
}

TEST_CASE("frame codec: truncated length prefix waits for more data") {
    FrameReader reader;
    std::vector<Bytes> frames;
    Bytes partial{0x00, 0x00, 0x01};  // 3 of 4 length bytes
    CHECK(reader.feed(ByteSpan(partial.data(), partial.size()), frames));
    CHECK(frames.empty());
    CHECK(reader.buffered() == 3);
}

TEST_CASE("frame codec: oversized frames are a protocol error") {
    FrameReader reader(/*maxFrame=*/16);
    std::vector<Bytes> frames;
    Bytes big{0x00, 0x01, 0x00, 0x00};  // 65536 bytes announced
    CHECK(!reader.feed(ByteSpan(big.data(), big.size()), frames));
}

namespace {

struct Cluster {
    std::shared_ptr<const SignatureScheme> scheme = makeEd25519Scheme();
    std::vector<ClientId> clientIds{1};
    std::vector<std::unique_ptr<Node>> nodes;
    std::vector<std::thread> threads;
    std::atomic<bool> stop{false};

    Cluster() {
        for (ReplicaId r = 0; r < 4; ++r) {
            ReplicaConfig rc;
            rc.id = r;
            rc.replicaCount = 4;
            rc.maxFaulty = 1;
            rc.delta = 50'000;  // 50 ms keeps the smoke test snappy
            rc.cpInterval = 50;
            rc.expansionLimit = 5;
            NodeConfig nc;
            nc.replica = rc;
            nc.listenPort = 0;
            nodes.push_back(std::make_unique<Node>(
                nc, Keyring::forSimulation(scheme, SignerId::replica(r), 4, clientIds),
                std::make_unique<KvStore>()));
        }
        std::map<ReplicaId, PeerAddress> peers;
        for (ReplicaId r = 0; r < 4; ++r) peers[r] = {"127.0.0.1", nodes[r]->boundPort()};
        for (auto& n : nodes) n->setPeers(peers);
        for (auto& n : nodes) threads.emplace_back([&n, this] { n->run(stop); });
    }

    ~Cluster() {
        stop = true;
        for (auto& t : threads) t.join();
    }
};

// Minimal blocking client used only by this smoke test.
struct SmokeClient {
    int fds[4] = {-1, -1, -1, -1};

    explicit SmokeClient(const Cluster& cluster) {
        for (int i = 0; i < 4; ++i) {
            fds[i] = ::socket(AF_INET, SOCK_STREAM, 0);
            sockaddr_in addr{};
            addr.sin_family = AF_INET;
            addr.sin_port = htons(cluster.nodes[i]->boundPort());
            inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
            REQUIRE(::connect(fds[i], reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0);
        }
    }

    ~SmokeClient() {
        for (int fd : fds)
            if (fd >= 0) ::close(fd);
    }

    // Clients multicast so every replica learns their return channel.
    void sendToAll(const ProtocolMessage& msg) {
        Bytes frame = encodeFrame(msg);
        for (int fd : fds)
            REQUIRE(::send(fd, frame.data(), frame.size(), 0) ==
                    static_cast<ssize_t>(frame.size()));
    }

    size_t awaitReplies(const Keyring& ring, Timestamp ts, size_t needed, int deadlineMs) {
        FrameReader readers[4];
        std::set<ReplicaId> matched;
        auto until = std::chrono::steady_clock::now() + std::chrono::milliseconds(deadlineMs);
        while (std::chrono::steady_clock::now() < until && matched.size() < needed) {
            for (int i = 0; i < 4; ++i) {
                char buf[4096];
                ssize_t n = ::recv(fds[i], buf, sizeof(buf), MSG_DONTWAIT);
                if (n <= 0) continue;
                std::vector<Bytes> frames;
                readers[i].feed(ByteSpan(reinterpret_cast<const std::uint8_t*>(buf), n), frames);
                for (const auto& payload : frames) {
                    auto msg = decodeMessage(ByteSpan(payload.data(), payload.size()));
                    if (!msg) continue;
                    const auto* reply = std::get_if<Reply>(&*msg);
                    if (reply && reply->clientTimestamp == ts && verifySignedMessage(ring, *reply))
                        matched.insert(reply->sender_);
                }
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
        }
        return matched.size();
    }
};

}  // namespace

TEST_CASE("four daemons on localhost: requests execute with f+1 matching replies") {
    Cluster cluster;
    Keyring clientRing = Keyring::forSimulation(cluster.scheme, SignerId::client(1), 4, {1});
    SmokeClient client(cluster);

    Request req = makeSignedRequest(clientRing, 1, 1,
                                    KvOperation::write(toBytes("k"), toBytes("v")).encoded());
    client.sendToAll(ClientSubmit{req});
    CHECK(client.awaitReplies(clientRing, 1, 2, 5000) >= 2);

    // Corrupted signature: discarded, connection stays usable.
    Request bad = makeSignedRequest(clientRing, 1, 2,
                                    KvOperation::write(toBytes("x"), toBytes("y")).encoded());
    bad.signature[0] ^= 0xff;
    client.sendToAll(ClientSubmit{bad});

    // Drop every connection of replica 2 mid-run; reconnect plus
    // retransmission still commits the next request.
    cluster.nodes[2]->dropConnections();
    Request req2 = makeSignedRequest(clientRing, 1, 2,
                                     KvOperation::write(toBytes("k2"), toBytes("v2")).encoded());
    client.sendToAll(ClientSubmit{req2});
    CHECK(client.awaitReplies(clientRing, 2, 2, 8000) >= 2);
}
