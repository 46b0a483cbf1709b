#include <CLI11.hpp>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <iostream>

#include "peerbft/app/kvstore.hpp"
#include "peerbft/client.hpp"
#include "peerbft/transport/cluster.hpp"

using namespace peerbft;
using namespace peerbft::transport;

namespace {

Micros nowMicros() {
    return std::chrono::duration_cast<std::chrono::microseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Closed-loop benchmark client for a running replica cluster"};
    std::string configPath;
    ClientId clientId = 1;
    std::uint32_t ops = 10;
    double conflict = 0.0;
    ReplicaId home = 0;
    app.add_option("--config", configPath, "Cluster config JSON")->required();
    app.add_option("--id", clientId, "Client id from the config");
    app.add_option("--ops", ops, "Number of write requests");
    app.add_option("--conflict", conflict, "Shared-key write probability");
    app.add_option("--home", home, "Home replica");
    CLI11_PARSE(app, argc, argv);

    try {
        ClusterConfig cluster = ClusterConfig::fromJsonFile(configPath);
        Keyring ring = cluster.keyringFor(SignerId::client(clientId));

        std::vector<int> fds(cluster.replicaCount(), -1);
        std::vector<FrameReader> readers(cluster.replicaCount());
        for (const auto& r : cluster.replicas) {
            int fd = ::socket(AF_INET, SOCK_STREAM, 0);
            sockaddr_in addr{};
            addr.sin_family = AF_INET;
            addr.sin_port = htons(r.port);
            inet_pton(AF_INET, r.host.c_str(), &addr.sin_addr);
            if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
                std::cerr << "cannot connect to replica " << r.id << "\n";
                return 2;
            }
            int one = 1;
            setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
            fds[r.id] = fd;
        }

        ClientConfig cc;
        cc.id = clientId;
        cc.homeReplica = home;
        cc.replicaCount = cluster.replicaCount();
        cc.maxFaulty = cluster.maxFaulty;
        cc.delta = cluster.delta;
        ClientSession session(cc, std::move(ring));

        std::multimap<Micros, std::uint64_t> timers;
        auto route = [&](ClientSession::Output&& out, Micros now) {
            for (const auto& t : out.timers) timers.emplace(now + t.delay, t.token);
            for (const auto& ob : out.messages) {
                if (ob.dest.kind != Destination::Kind::Replica) continue;
                Bytes frame = encodeFrame(ob.message);
                // Multicast so every replica learns the reply channel.
                for (int fd : fds) (void)!::send(fd, frame.data(), frame.size(), MSG_NOSIGNAL);
            }
            return out.accepted;
        };

        std::vector<Micros> latencies;
        for (std::uint32_t i = 0; i < ops; ++i) {
            std::string key = (static_cast<double>(rand()) / RAND_MAX < conflict)
                                  ? std::string("shared")
                                  : "bench-" + std::to_string(clientId) + "-" + std::to_string(i);
            Micros start = nowMicros();
            route(session.submit(
                      KvOperation::write(toBytes(key), toBytes("v" + std::to_string(i))).encoded()),
                  start);

            bool done = false;
            while (!done) {
                Micros now = nowMicros();
                while (!timers.empty() && timers.begin()->first <= now) {
                    std::uint64_t token = timers.begin()->second;
                    timers.erase(timers.begin());
                    if (route(session.onTimer(token), now)) done = true;
                }
                std::vector<pollfd> pfds;
                for (int fd : fds) pfds.push_back({fd, POLLIN, 0});
                ::poll(pfds.data(), pfds.size(), 20);
                now = nowMicros();
                for (size_t r = 0; r < fds.size(); ++r) {
                    if (!(pfds[r].revents & POLLIN)) continue;
                    char buf[8192];
                    ssize_t n = ::recv(fds[r], buf, sizeof(buf), MSG_DONTWAIT);
                    if (n <= 0) continue;
                    std::vector<Bytes> frames;
                    readers[r].feed(ByteSpan(reinterpret_cast<const std::uint8_t*>(buf), n),
                                    frames);
                    for (const auto& payload : frames) {
                        auto msg = decodeMessage(ByteSpan(payload.data(), payload.size()));
                        if (!msg) continue;
                        if (const auto* reply = std::get_if<Reply>(&*msg))
                            if (route(session.onReply(*reply), now)) done = true;
                    }
                }
            }
            Micros latency = nowMicros() - start;
            latencies.push_back(latency);
            std::cout << "op " << i << " key=" << key << " " << latency / 1000 << " ms\n";
        }

        std::sort(latencies.begin(), latencies.end());
        if (!latencies.empty())
            std::cout << "done: " << ops << " ops, p50 " << latencies[latencies.size() / 2] / 1000
                      << " ms, max " << latencies.back() / 1000 << " ms\n";
        for (int fd : fds) ::close(fd);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
