#pragma once

#include <map>

#include "peerbft/app/application.hpp"
#include "peerbft/encoding.hpp"

namespace peerbft {

// Single-key read/write operations for the benchmark key-value store.
struct KvOperation {
    enum class Kind : std::uint8_t { Read = 0, Write = 1 };

    Kind kind = Kind::Read;
    Bytes key;
    Bytes value;  // Write only

    static KvOperation read(Bytes key) { return {Kind::Read, std::move(key), {}}; }
    static KvOperation write(Bytes key, Bytes value) {
        return {Kind::Write, std::move(key), std::move(value)};
    }

    Bytes encoded() const {
        Encoder enc;
        enc.u8(static_cast<std::uint8_t>(kind));
        enc.bytes(key);
        if (kind == Kind::Write) enc.bytes(value);
        return enc.take();
    }

    static std::optional<KvOperation> decode(ByteSpan data) {
        Decoder dec(data);
        KvOperation op;
        op.kind = static_cast<Kind>(dec.u8());
        if (op.kind > Kind::Write) return std::nullopt;
        op.key = dec.bytes();
        if (op.kind == Kind::Write) op.value = dec.bytes();
        if (!dec.finish() || op.key.empty()) return std::nullopt;
        return op;
    }
};

// Results are tagged so a read of an absent key is unambiguous when clients
// match f+1 replies.
struct KvResult {
    enum class Kind : std::uint8_t { Absent = 0, Value = 1, WriteAck = 2 };

    static Bytes absent() { return Bytes{static_cast<std::uint8_t>(Kind::Absent)}; }
    static Bytes writeAck() { return Bytes{static_cast<std::uint8_t>(Kind::WriteAck)}; }
    static Bytes value(const Bytes& v) {
        Bytes out{static_cast<std::uint8_t>(Kind::Value)};
        out.insert(out.end(), v.begin(), v.end());
        return out;
    }
};

class KvStore final : public Application {
  public:
    bool operationsConflict(ByteSpan a, ByteSpan b) const override {
        auto opA = KvOperation::decode(a);
        auto opB = KvOperation::decode(b);
        if (!opA || !opB) return true;  // malformed payloads conflict conservatively
        if (opA->key != opB->key) return false;
        return opA->kind == KvOperation::Kind::Write || opB->kind == KvOperation::Kind::Write;
    }

    std::optional<Bytes> execute(const Request& request) override {
        auto last = lastTimestamp_.find(request.client);
        if (last != lastTimestamp_.end() && request.timestamp <= last->second)
            return std::nullopt;  // duplicate
        lastTimestamp_[request.client] = request.timestamp;

        auto op = KvOperation::decode(request.operation);
        if (!op) return Bytes{};  // accepted but meaningless payload
        if (op->kind == KvOperation::Kind::Write) {
            store_[op->key] = op->value;
            return KvResult::writeAck();
        }
        auto it = store_.find(op->key);
        if (it == store_.end()) return KvResult::absent();
        return KvResult::value(it->second);
    }

    Bytes snapshot() const override {
        Encoder enc;
        enc.u32(static_cast<std::uint32_t>(store_.size()));
        for (const auto& [k, v] : store_) {
            enc.bytes(k);
            enc.bytes(v);
        }
        enc.u32(static_cast<std::uint32_t>(lastTimestamp_.size()));
        for (const auto& [client, ts] : lastTimestamp_) {
            enc.u64(client);
            enc.u64(ts);
        }
        return enc.take();
    }

    bool restore(ByteSpan bytes) override {
        Decoder dec(bytes);
        std::map<Bytes, Bytes> store;
        std::map<ClientId, Timestamp> lastTs;
        std::uint32_t n = dec.u32();
        std::optional<Bytes> prevKey;
        for (std::uint32_t i = 0; i < n && dec.ok(); ++i) {
            Bytes k = dec.bytes();
            Bytes v = dec.bytes();
            if (prevKey && !(*prevKey < k)) dec.fail();
            prevKey = k;
            store.emplace(std::move(k), std::move(v));
        }
        n = dec.u32();
        std::optional<ClientId> prevClient;
        for (std::uint32_t i = 0; i < n && dec.ok(); ++i) {
            ClientId c = dec.u64();
            Timestamp t = dec.u64();
            if (prevClient && *prevClient >= c) dec.fail();
            prevClient = c;
            lastTs.emplace(c, t);
        }
        if (!dec.finish()) return false;
        store_ = std::move(store);
        lastTimestamp_ = std::move(lastTs);
        return true;
    }

    Digest stateDigest() const override { return digestOf(snapshot()); }

    const std::map<Bytes, Bytes>& store() const { return store_; }
    std::optional<Timestamp> lastTimestamp(ClientId c) const {
        auto it = lastTimestamp_.find(c);
        if (it == lastTimestamp_.end()) return std::nullopt;
        return it->second;
    }

  private:
    std::map<Bytes, Bytes> store_;
    std::map<ClientId, Timestamp> lastTimestamp_;
};

}  // namespace peerbft
