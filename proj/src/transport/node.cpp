#include "peerbft/transport/node.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <stdexcept>

namespace peerbft::transport {

namespace {

void setNonBlocking(int fd) {
    int flags = fcntl(fd, F_GETFL, 0);
    fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

}  // namespace

Node::Node(const NodeConfig& cfg, Keyring ring, std::unique_ptr<Application> app)
    : cfg_(cfg), ring_(std::move(ring)), replica_(cfg.replica, ring_, std::move(app)) {
    openListener();
}

Node::~Node() {
    for (auto& c : conns_)
        if (c.fd >= 0) ::close(c.fd);
    if (listenFd_ >= 0) ::close(listenFd_);
}

Micros Node::monotonicNow() const {
    return std::chrono::duration_cast<std::chrono::microseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

void Node::openListener() {
    listenFd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listenFd_ < 0) throw std::runtime_error("socket() failed");
    int one = 1;
    setsockopt(listenFd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(cfg_.listenPort);
    inet_pton(AF_INET, cfg_.listenHost.c_str(), &addr.sin_addr);
    if (::bind(listenFd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
        throw std::runtime_error("bind() failed on " + cfg_.listenHost + ":" +
                                 std::to_string(cfg_.listenPort));
    if (::listen(listenFd_, 64) != 0) throw std::runtime_error("listen() failed");
    socklen_t len = sizeof(addr);
    getsockname(listenFd_, reinterpret_cast<sockaddr*>(&addr), &len);
    boundPort_ = ntohs(addr.sin_port);
    setNonBlocking(listenFd_);
}

void Node::ensurePeerConnection(ReplicaId peer, Micros now) {
    if (peerConn_.count(peer)) return;
    auto retry = reconnectAt_.find(peer);
    if (retry != reconnectAt_.end() && now < retry->second) return;
    auto addrIt = cfg_.peers.find(peer);
    if (addrIt == cfg_.peers.end()) return;

    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) return;
    setNonBlocking(fd);
    int one = 1;
    setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(addrIt->second.port);
    inet_pton(AF_INET, addrIt->second.host.c_str(), &addr.sin_addr);
    int rc = ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
    if (rc != 0 && errno != EINPROGRESS) {
        ::close(fd);
        reconnectAt_[peer] = now + 250'000;  // backoff
        return;
    }
    Conn conn;
    conn.fd = fd;
    conn.reader = FrameReader(cfg_.maxFrame);
    conn.connecting = rc != 0;
    conn.peer = peer;
    conns_.push_back(std::move(conn));
    peerConn_[peer] = conns_.size() - 1;
}

void Node::queueFrame(Conn& conn, const ProtocolMessage& msg) {
    Bytes frame = encodeFrame(msg);
    conn.sendQueue.insert(conn.sendQueue.end(), frame.begin(), frame.end());
}

void Node::routeOutput(StepOutput&& out, Micros now) {
    for (const auto& t : out.timers) timers_.emplace(now + t.delay, t.token);
    for (const auto& ob : out.messages) {
        if (ob.dest.kind == Destination::Kind::Client) {
            auto it = clientConn_.find(ob.dest.client);
            if (it != clientConn_.end() && it->second < conns_.size() &&
                conns_[it->second].fd >= 0)
                queueFrame(conns_[it->second], ob.message);
            continue;
        }
        std::vector<ReplicaId> dests;
        if (ob.dest.kind == Destination::Kind::Replica) {
            dests.push_back(ob.dest.replica);
        } else {
            for (ReplicaId d = 0; d < cfg_.replica.replicaCount; ++d)
                if (d != cfg_.replica.id) dests.push_back(d);
        }
        for (ReplicaId d : dests) {
            ensurePeerConnection(d, now);
            auto it = peerConn_.find(d);
            if (it != peerConn_.end()) queueFrame(conns_[it->second], ob.message);
            // Unreachable peers rely on the protocol's retransmission.
        }
    }
}

void Node::handleFrames(size_t connIdx, std::vector<Bytes>& frames, Micros now) {
    // routeOutput may grow conns_, so never hold a Conn reference here.
    std::vector<Bytes> local = std::move(frames);
    frames.clear();
    for (const auto& payload : local) {
        auto msg = decodeMessage(ByteSpan(payload.data(), payload.size()));
        if (!msg) continue;  // undecodable payload; the signature layer never ran
        if (const auto* submit = std::get_if<ClientSubmit>(&*msg))
            clientConn_[submit->request.client] = connIdx;
        routeOutput(replica_.step(Replica::Event{*msg}), now);
    }
}

void Node::closeConn(size_t idx) {
    Conn& c = conns_[idx];
    if (c.fd >= 0) ::close(c.fd);
    c.fd = -1;
    c.sendQueue.clear();
    if (c.peer) {
        peerConn_.erase(*c.peer);
        reconnectAt_[*c.peer] = monotonicNow() + 250'000;
    }
}

void Node::run(std::atomic<bool>& stop) {
    std::vector<Bytes> frames;
    while (!stop.load(std::memory_order_relaxed)) {
        Micros now = monotonicNow();

        if (dropRequested_.exchange(false)) {
            for (size_t i = 0; i < conns_.size(); ++i) closeConn(i);
        }

        // Fire due timers.
        while (!timers_.empty() && timers_.begin()->first <= now) {
            std::uint64_t token = timers_.begin()->second;
            timers_.erase(timers_.begin());
            routeOutput(replica_.step(Replica::Event{Replica::TimerEvent{token}}), now);
        }
        for (ReplicaId d = 0; d < cfg_.replica.replicaCount; ++d)
            if (d != cfg_.replica.id) ensurePeerConnection(d, now);

        // Compact closed connections (indices shift; rebuild maps).
        {
            std::vector<Conn> keep;
            std::map<ReplicaId, size_t> peerMap;
            std::map<ClientId, size_t> clientMap;
            for (auto& c : conns_) {
                if (c.fd < 0) continue;
                size_t oldIdx = static_cast<size_t>(&c - conns_.data());
                size_t newIdx = keep.size();
                if (c.peer) peerMap[*c.peer] = newIdx;
                for (auto& [client, idx] : clientConn_)
                    if (idx == oldIdx) clientMap[client] = newIdx;
                keep.push_back(std::move(c));
            }
            conns_ = std::move(keep);
            peerConn_ = std::move(peerMap);
            clientConn_ = std::move(clientMap);
        }

        std::vector<pollfd> fds;
        fds.push_back({listenFd_, POLLIN, 0});
        for (auto& c : conns_) {
            short events = POLLIN;
            if (!c.sendQueue.empty() || c.connecting) events |= POLLOUT;
            fds.push_back({c.fd, events, 0});
        }
        Micros timeout = 20'000;
        if (!timers_.empty())
            timeout = std::max<Micros>(0, std::min<Micros>(timeout, timers_.begin()->first - now));
        ::poll(fds.data(), fds.size(), static_cast<int>(timeout / 1000) + 1);
        now = monotonicNow();

        if (fds[0].revents & POLLIN) {
            while (true) {
                int fd = ::accept(listenFd_, nullptr, nullptr);
                if (fd < 0) break;
                setNonBlocking(fd);
                int one = 1;
                setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
                Conn conn;
                conn.fd = fd;
                conn.reader = FrameReader(cfg_.maxFrame);
                conns_.push_back(std::move(conn));
            }
        }

        for (size_t i = 0; i < conns_.size(); ++i) {
            Conn& c = conns_[i];
            if (c.fd < 0 || i + 1 >= fds.size()) continue;
            short revents = fds[i + 1].revents;
            if (revents & (POLLERR | POLLHUP)) {
                closeConn(i);
                continue;
            }
            if (revents & POLLOUT) {
                if (c.connecting) {
                    int err = 0;
                    socklen_t len = sizeof(err);
                    getsockopt(c.fd, SOL_SOCKET, SO_ERROR, &err, &len);
                    if (err != 0) {
                        closeConn(i);
                        continue;
                    }
                    c.connecting = false;
                }
                if (!c.sendQueue.empty()) {
                    ssize_t n = ::send(c.fd, c.sendQueue.data(), c.sendQueue.size(), MSG_NOSIGNAL);
                    if (n > 0)
                        c.sendQueue.erase(c.sendQueue.begin(), c.sendQueue.begin() + n);
                    else if (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK)
                        closeConn(i);
                }
            }
            if (c.fd >= 0 && (revents & POLLIN)) {
                char buf[16384];
                while (true) {
                    ssize_t n = ::recv(c.fd, buf, sizeof(buf), 0);
                    if (n > 0) {
                        if (!c.reader.feed(
                                ByteSpan(reinterpret_cast<const std::uint8_t*>(buf), n),
                                frames)) {
                            closeConn(i);  // oversized frame: protocol error
                            break;
                        }
                    } else if (n == 0) {
                        closeConn(i);
                        break;
                    } else {
                        if (errno != EAGAIN && errno != EWOULDBLOCK) closeConn(i);
                        break;
                    }
                }
                if (conns_[i].fd >= 0 && !frames.empty()) handleFrames(i, frames, now);
                frames.clear();
            }
        }
    }
}

}  // namespace peerbft::transport
