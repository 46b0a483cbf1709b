#pragma once

#include <optional>
#include <vector>

#include "peerbft/crypto.hpp"
#include "peerbft/encoding.hpp"
#include "peerbft/types.hpp"

namespace peerbft {

// A client request, or one of the protocol's content-fixed sentinel requests.
// NoOp fills view-changed slots and conflicts with nothing; the checkpoint
// request is proposed every cp_interval slots and conflicts with everything.
// Batch is a coordinator-side container of client requests executed in order.
struct Request {
    enum class Kind : std::uint8_t { Regular = 0, NoOp = 1, Checkpoint = 2, Batch = 3 };

    Kind kind = Kind::Regular;
    ClientId client = 0;
    Timestamp timestamp = 0;
    Bytes operation;
    Bytes signature;
    std::vector<Request> members;  // Batch only; each member is Regular

    static Request noOp() {
        Request r;
        r.kind = Kind::NoOp;
        return r;
    }

    static Request checkpointRequest() {
        Request r;
        r.kind = Kind::Checkpoint;
        return r;
    }

    static Request batch(std::vector<Request> members) {
        Request r;
        r.kind = Kind::Batch;
        r.members = std::move(members);
        return r;
    }

    bool isNoOp() const { return kind == Kind::NoOp; }
    bool isCheckpoint() const { return kind == Kind::Checkpoint; }
    bool isBatch() const { return kind == Kind::Batch; }
    bool isRegular() const { return kind == Kind::Regular; }

    // Encoding without the signature; this is what the client signs.
    void encodeSignedBody(Encoder& enc) const {
        enc.u8(static_cast<std::uint8_t>(kind));
        if (kind == Kind::Regular) {
            enc.u64(client);
            enc.u64(timestamp);
            enc.bytes(operation);
        }
    }

    void encode(Encoder& enc) const {
        enc.u8(static_cast<std::uint8_t>(kind));
        switch (kind) {
            case Kind::Regular:
                enc.u64(client);
                enc.u64(timestamp);
                enc.bytes(operation);
                enc.bytes(signature);
                break;
            case Kind::NoOp:
            case Kind::Checkpoint:
                break;  // content-fixed singleton encodings
            case Kind::Batch:
                enc.u32(static_cast<std::uint32_t>(members.size()));
                for (const auto& m : members) m.encode(enc);
                break;
        }
    }

    static Request decode(Decoder& dec, int depth = 0) {
        Request r;
        r.kind = static_cast<Kind>(dec.u8());
        switch (r.kind) {
            case Kind::Regular:
                r.client = dec.u64();
                r.timestamp = dec.u64();
                r.operation = dec.bytes();
                r.signature = dec.bytes();
                break;
            case Kind::NoOp:
            case Kind::Checkpoint:
                break;
            case Kind::Batch: {
                if (depth > 0) {
                    dec.fail();  // batches do not nest
                    break;
                }
                std::uint32_t n = dec.u32();
                for (std::uint32_t i = 0; i < n && dec.ok(); ++i)
                    r.members.push_back(decode(dec, depth + 1));
                break;
            }
            default:
                dec.fail();
        }
        return r;
    }

    Bytes encoded() const {
        Encoder enc;
        encode(enc);
        return enc.take();
    }

    Digest hash() const { return digestOf(encoded()); }

    auto operator<=>(const Request&) const = default;
};

inline Request makeSignedRequest(const Keyring& clientRing, ClientId client, Timestamp ts,
                                 Bytes operation) {
    Request r;
    r.kind = Request::Kind::Regular;
    r.client = client;
    r.timestamp = ts;
    r.operation = std::move(operation);
    Encoder enc;
    r.encodeSignedBody(enc);
    r.signature = clientRing.sign(enc.result());
    return r;
}

// Checks the client signature on a Regular request, or on every member of a
// batch. Sentinel requests are unsigned by construction.
inline bool verifyRequestSignature(const Keyring& ring, const Request& r) {
    switch (r.kind) {
        case Request::Kind::NoOp:
        case Request::Kind::Checkpoint:
            return r.signature.empty() && r.members.empty();
        case Request::Kind::Regular: {
            Encoder enc;
            r.encodeSignedBody(enc);
            return ring.verify(SignerId::client(r.client), enc.result(), r.signature);
        }
        case Request::Kind::Batch:
            if (r.members.empty()) return false;
            for (const auto& m : r.members) {
                if (!m.isRegular() || !verifyRequestSignature(ring, m)) return false;
            }
            return true;
    }
    return false;
}

}  // namespace peerbft
