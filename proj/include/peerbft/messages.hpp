#pragma once

#include <algorithm>
#include <optional>
#include <variant>
#include <vector>

#include "peerbft/depset.hpp"
#include "peerbft/request.hpp"

namespace peerbft {

// Wire tags; also the first byte of every signed body so signatures cannot be
// replayed across message types.
enum class MsgTag : std::uint8_t {
    DepPropose = 1,
    DepVerify = 2,
    DepCommit = 3,
    Prepare = 4,
    Commit = 5,
    ViewChange = 6,
    NewView = 7,
    Checkpoint = 8,
    QueryExec = 9,
    ExecInfo = 10,
    Reply = 11,
    ClientSubmit = 12,
    CheckpointFetchReq = 13,
    CheckpointFetchResp = 14,
};

struct DepPropose {
    static constexpr MsgTag kTag = MsgTag::DepPropose;

    SlotId slot;
    ReplicaId coordinator = 0;
    Digest requestHash;
    DependencySet deps;
    std::vector<ReplicaId> fastQuorum;  // sorted, 2f entries, coordinator excluded
    Bytes signature;
    // Full request travels alongside the signed core; rebroadcasts may omit it.
    std::optional<Request> request;

    SignerId sender() const { return SignerId::replica(coordinator); }

    void encodeSignedBody(Encoder& enc) const {
        enc.u8(static_cast<std::uint8_t>(kTag));
        enc.slot(slot);
        enc.u32(coordinator);
        enc.digest(requestHash);
        deps.encode(enc);
        enc.u32(static_cast<std::uint32_t>(fastQuorum.size()));
        for (auto r : fastQuorum) enc.u32(r);
    }

    void encode(Encoder& enc) const {
        encodeSignedBody(enc);
        enc.bytes(signature);
        enc.u8(request.has_value() ? 1 : 0);
        if (request) request->encode(enc);
    }

    static DepPropose decode(Decoder& dec) {
        DepPropose m;
        if (dec.u8() != static_cast<std::uint8_t>(kTag)) dec.fail();
        m.slot = dec.slot();
        m.coordinator = dec.u32();
        m.requestHash = dec.digest();
        m.deps = DependencySet::decode(dec);
        std::uint32_t n = dec.u32();
        for (std::uint32_t i = 0; i < n && dec.ok(); ++i) m.fastQuorum.push_back(dec.u32());
        m.signature = dec.bytes();
        if (dec.u8()) m.request = Request::decode(dec);
        return m;
    }

    auto operator<=>(const DepPropose&) const = default;
};

struct DepVerify {
    static constexpr MsgTag kTag = MsgTag::DepVerify;

    SlotId slot;
    ReplicaId sender_ = 0;
    Digest depProposeHash;
    DependencySet deps;
    Bytes signature;

    SignerId sender() const { return SignerId::replica(sender_); }

    void encodeSignedBody(Encoder& enc) const {
        enc.u8(static_cast<std::uint8_t>(kTag));
        enc.slot(slot);
        enc.u32(sender_);
        enc.digest(depProposeHash);
        deps.encode(enc);
    }

    void encode(Encoder& enc) const {
        encodeSignedBody(enc);
        enc.bytes(signature);
    }

    static DepVerify decode(Decoder& dec) {
        DepVerify m;
        if (dec.u8() != static_cast<std::uint8_t>(kTag)) dec.fail();
        m.slot = dec.slot();
        m.sender_ = dec.u32();
        m.depProposeHash = dec.digest();
        m.deps = DependencySet::decode(dec);
        m.signature = dec.bytes();
        return m;
    }

    auto operator<=>(const DepVerify&) const = default;
};

struct DepCommit {
    static constexpr MsgTag kTag = MsgTag::DepCommit;

    SlotId slot;
    ReplicaId sender_ = 0;
    Digest dvSetHash;
    Bytes signature;

    SignerId sender() const { return SignerId::replica(sender_); }

    void encodeSignedBody(Encoder& enc) const {
        enc.u8(static_cast<std::uint8_t>(kTag));
        enc.slot(slot);
        enc.u32(sender_);
        enc.digest(dvSetHash);
    }

    void encode(Encoder& enc) const {
        encodeSignedBody(enc);
        enc.bytes(signature);
    }

    static DepCommit decode(Decoder& dec) {
        DepCommit m;
        if (dec.u8() != static_cast<std::uint8_t>(kTag)) dec.fail();
        m.slot = dec.slot();
        m.sender_ = dec.u32();
        m.dvSetHash = dec.digest();
        m.signature = dec.bytes();
        return m;
    }

    auto operator<=>(const DepCommit&) const = default;
};

template <MsgTag Tag>
struct ViewPhaseMessage {
    static constexpr MsgTag kTag = Tag;

    ViewNumber view = kInitialView;
    SlotId slot;
    ReplicaId sender_ = 0;
    Digest dvSetHash;
    Bytes signature;

    SignerId sender() const { return SignerId::replica(sender_); }

    void encodeSignedBody(Encoder& enc) const {
        enc.u8(static_cast<std::uint8_t>(kTag));
        enc.i32(view);
        enc.slot(slot);
        enc.u32(sender_);
        enc.digest(dvSetHash);
    }

    void encode(Encoder& enc) const {
        encodeSignedBody(enc);
        enc.bytes(signature);
    }

    static ViewPhaseMessage decode(Decoder& dec) {
        ViewPhaseMessage m;
        if (dec.u8() != static_cast<std::uint8_t>(kTag)) dec.fail();
        m.view = dec.i32();
        m.slot = dec.slot();
        m.sender_ = dec.u32();
        m.dvSetHash = dec.digest();
        m.signature = dec.bytes();
        return m;
    }

    auto operator<=>(const ViewPhaseMessage&) const = default;
};

using Prepare = ViewPhaseMessage<MsgTag::Prepare>;
using Commit = ViewPhaseMessage<MsgTag::Commit>;

// Agreement-state evidence carried in a ViewChange. FPC confirms fp-verified,
// RPC confirms rp-prepared; the CRC part carries the auxiliary DepVerify used
// for checkpoint slots. Selection priority during a view change is
// RPC > FPC > CRC > no-op.
struct Certificate {
    enum class Kind : std::uint8_t { None = 0, Fpc = 1, Rpc = 2, CrcPart = 3 };

    Kind kind = Kind::None;
    std::optional<DepPropose> depPropose;   // Fpc/Rpc
    std::vector<DepVerify> dvSet;           // Fpc/Rpc: 2f entries sorted by sender
    std::vector<Prepare> prepareSet;        // Rpc: 2f+1 entries, one view
    std::optional<DepVerify> auxDepVerify;  // CrcPart
    ViewNumber view = kInitialView;         // view the certificate was formed in

    void encode(Encoder& enc) const {
        enc.u8(static_cast<std::uint8_t>(kind));
        enc.i32(view);
        enc.u8(depPropose.has_value() ? 1 : 0);
        if (depPropose) depPropose->encode(enc);
        enc.u32(static_cast<std::uint32_t>(dvSet.size()));
        for (const auto& dv : dvSet) dv.encode(enc);
        enc.u32(static_cast<std::uint32_t>(prepareSet.size()));
        for (const auto& p : prepareSet) p.encode(enc);
        enc.u8(auxDepVerify.has_value() ? 1 : 0);
        if (auxDepVerify) auxDepVerify->encode(enc);
    }

    static Certificate decode(Decoder& dec) {
        Certificate c;
        c.kind = static_cast<Kind>(dec.u8());
        if (c.kind > Kind::CrcPart) dec.fail();
        c.view = dec.i32();
        if (dec.u8()) c.depPropose = DepPropose::decode(dec);
        std::uint32_t n = dec.u32();
        for (std::uint32_t i = 0; i < n && dec.ok(); ++i) c.dvSet.push_back(DepVerify::decode(dec));
        n = dec.u32();
        for (std::uint32_t i = 0; i < n && dec.ok(); ++i)
            c.prepareSet.push_back(Prepare::decode(dec));
        if (dec.u8()) c.auxDepVerify = DepVerify::decode(dec);
        return c;
    }

    auto operator<=>(const Certificate&) const = default;
};

struct ViewChange {
    static constexpr MsgTag kTag = MsgTag::ViewChange;

    ViewNumber view = 0;  // the view being entered
    SlotId slot;
    ReplicaId sender_ = 0;
    Certificate certificate;
    Bytes signature;

    SignerId sender() const { return SignerId::replica(sender_); }

    void encodeSignedBody(Encoder& enc) const {
        enc.u8(static_cast<std::uint8_t>(kTag));
        enc.i32(view);
        enc.slot(slot);
        enc.u32(sender_);
        certificate.encode(enc);
    }

    void encode(Encoder& enc) const {
        encodeSignedBody(enc);
        enc.bytes(signature);
    }

    static ViewChange decode(Decoder& dec) {
        ViewChange m;
        if (dec.u8() != static_cast<std::uint8_t>(kTag)) dec.fail();
        m.view = dec.i32();
        m.slot = dec.slot();
        m.sender_ = dec.u32();
        m.certificate = Certificate::decode(dec);
        m.signature = dec.bytes();
        return m;
    }

    auto operator<=>(const ViewChange&) const = default;
};

struct NewView {
    static constexpr MsgTag kTag = MsgTag::NewView;

    // What the view change decided on: a certified (dp, dv set), a checkpoint
    // request backed by 2f+1 auxiliary DepVerifys, or a no-op.
    enum class Selection : std::uint8_t { Certified = 0, CheckpointCrc = 1, NoOp = 2 };

    ViewNumber view = 0;
    SlotId slot;
    ReplicaId coordinator = 0;
    Selection selection = Selection::NoOp;
    std::optional<DepPropose> depPropose;   // Certified
    std::vector<DepVerify> dvSet;           // Certified: 2f; CheckpointCrc: 2f+1 aux
    std::vector<ViewChange> viewChangeSet;  // 2f+1 distinct senders
    Bytes signature;

    SignerId sender() const { return SignerId::replica(coordinator); }

    void encodeSignedBody(Encoder& enc) const {
        enc.u8(static_cast<std::uint8_t>(kTag));
        enc.i32(view);
        enc.slot(slot);
        enc.u32(coordinator);
        enc.u8(static_cast<std::uint8_t>(selection));
        enc.u8(depPropose.has_value() ? 1 : 0);
        if (depPropose) depPropose->encode(enc);
        enc.u32(static_cast<std::uint32_t>(dvSet.size()));
        for (const auto& dv : dvSet) dv.encode(enc);
        enc.u32(static_cast<std::uint32_t>(viewChangeSet.size()));
        for (const auto& vc : viewChangeSet) vc.encode(enc);
    }

    void encode(Encoder& enc) const {
        encodeSignedBody(enc);
        enc.bytes(signature);
    }

    static NewView decode(Decoder& dec) {
        NewView m;
        if (dec.u8() != static_cast<std::uint8_t>(kTag)) dec.fail();
        m.view = dec.i32();
        m.slot = dec.slot();
        m.coordinator = dec.u32();
        m.selection = static_cast<Selection>(dec.u8());
        if (m.selection > Selection::NoOp) dec.fail();
        if (dec.u8()) m.depPropose = DepPropose::decode(dec);
        std::uint32_t n = dec.u32();
        for (std::uint32_t i = 0; i < n && dec.ok(); ++i) m.dvSet.push_back(DepVerify::decode(dec));
        n = dec.u32();
        for (std::uint32_t i = 0; i < n && dec.ok(); ++i)
            m.viewChangeSet.push_back(ViewChange::decode(dec));
        m.signature = dec.bytes();
        return m;
    }

    auto operator<=>(const NewView&) const = default;
};

struct CheckpointMsg {
    static constexpr MsgTag kTag = MsgTag::Checkpoint;

    std::uint64_t seq = 0;
    ReplicaId sender_ = 0;
    DependencySet barrier;
    Digest stateHash;
    Bytes signature;

    SignerId sender() const { return SignerId::replica(sender_); }

    void encodeSignedBody(Encoder& enc) const {
        enc.u8(static_cast<std::uint8_t>(kTag));
        enc.u64(seq);
        enc.u32(sender_);
        barrier.encode(enc);
        enc.digest(stateHash);
    }

    void encode(Encoder& enc) const {
        encodeSignedBody(enc);
        enc.bytes(signature);
    }

    static CheckpointMsg decode(Decoder& dec) {
        CheckpointMsg m;
        if (dec.u8() != static_cast<std::uint8_t>(kTag)) dec.fail();
        m.seq = dec.u64();
        m.sender_ = dec.u32();
        m.barrier = DependencySet::decode(dec);
        m.stateHash = dec.digest();
        m.signature = dec.bytes();
        return m;
    }

    auto operator<=>(const CheckpointMsg&) const = default;
};

struct QueryExec {
    static constexpr MsgTag kTag = MsgTag::QueryExec;

    SlotId slot;
    ReplicaId sender_ = 0;
    Bytes signature;

    SignerId sender() const { return SignerId::replica(sender_); }

    void encodeSignedBody(Encoder& enc) const {
        enc.u8(static_cast<std::uint8_t>(kTag));
        enc.slot(slot);
        enc.u32(sender_);
    }

    void encode(Encoder& enc) const {
        encodeSignedBody(enc);
        enc.bytes(signature);
    }

    static QueryExec decode(Decoder& dec) {
        QueryExec m;
        if (dec.u8() != static_cast<std::uint8_t>(kTag)) dec.fail();
        m.slot = dec.slot();
        m.sender_ = dec.u32();
        m.signature = dec.bytes();
        return m;
    }

    auto operator<=>(const QueryExec&) const = default;
};

// Commit report for a lagging replica: the committed request and final deps.
struct ExecInfo {
    static constexpr MsgTag kTag = MsgTag::ExecInfo;

    SlotId slot;
    ReplicaId sender_ = 0;
    Request request;
    DependencySet deps;
    Bytes signature;

    SignerId sender() const { return SignerId::replica(sender_); }

    void encodeSignedBody(Encoder& enc) const {
        enc.u8(static_cast<std::uint8_t>(kTag));
        enc.slot(slot);
        enc.u32(sender_);
        request.encode(enc);
        deps.encode(enc);
    }

    void encode(Encoder& enc) const {
        encodeSignedBody(enc);
        enc.bytes(signature);
    }

    static ExecInfo decode(Decoder& dec) {
        ExecInfo m;
        if (dec.u8() != static_cast<std::uint8_t>(kTag)) dec.fail();
        m.slot = dec.slot();
        m.sender_ = dec.u32();
        m.request = Request::decode(dec);
        m.deps = DependencySet::decode(dec);
        m.signature = dec.bytes();
        return m;
    }

    auto operator<=>(const ExecInfo&) const = default;
};

struct Reply {
    static constexpr MsgTag kTag = MsgTag::Reply;

    SlotId slot;
    ReplicaId sender_ = 0;
    ClientId client = 0;
    Timestamp clientTimestamp = 0;
    Bytes result;
    Bytes signature;

    SignerId sender() const { return SignerId::replica(sender_); }

    void encodeSignedBody(Encoder& enc) const {
        enc.u8(static_cast<std::uint8_t>(kTag));
        enc.slot(slot);
        enc.u32(sender_);
        enc.u64(client);
        enc.u64(clientTimestamp);
        enc.bytes(result);
    }

    void encode(Encoder& enc) const {
        encodeSignedBody(enc);
        enc.bytes(signature);
    }

    static Reply decode(Decoder& dec) {
        Reply m;
        if (dec.u8() != static_cast<std::uint8_t>(kTag)) dec.fail();
        m.slot = dec.slot();
        m.sender_ = dec.u32();
        m.client = dec.u64();
        m.clientTimestamp = dec.u64();
        m.result = dec.bytes();
        m.signature = dec.bytes();
        return m;
    }

    auto operator<=>(const Reply&) const = default;
};

// A client request on the wire; authenticated by the request's own signature.
struct ClientSubmit {
    static constexpr MsgTag kTag = MsgTag::ClientSubmit;

    Request request;

    SignerId sender() const { return SignerId::client(request.client); }

    void encode(Encoder& enc) const {
        enc.u8(static_cast<std::uint8_t>(kTag));
        request.encode(enc);
    }

    static ClientSubmit decode(Decoder& dec) {
        ClientSubmit m;
        if (dec.u8() != static_cast<std::uint8_t>(kTag)) dec.fail();
        m.request = Request::decode(dec);
        return m;
    }

    auto operator<=>(const ClientSubmit&) const = default;
};

struct CheckpointFetchReq {
    static constexpr MsgTag kTag = MsgTag::CheckpointFetchReq;

    std::uint64_t sinceSeq = 0;
    ReplicaId sender_ = 0;
    Bytes signature;

    SignerId sender() const { return SignerId::replica(sender_); }

    void encodeSignedBody(Encoder& enc) const {
        enc.u8(static_cast<std::uint8_t>(kTag));
        enc.u64(sinceSeq);
        enc.u32(sender_);
    }

    void encode(Encoder& enc) const {
        encodeSignedBody(enc);
        enc.bytes(signature);
    }

    static CheckpointFetchReq decode(Decoder& dec) {
        CheckpointFetchReq m;
        if (dec.u8() != static_cast<std::uint8_t>(kTag)) dec.fail();
        m.sinceSeq = dec.u64();
        m.sender_ = dec.u32();
        m.signature = dec.bytes();
        return m;
    }

    auto operator<=>(const CheckpointFetchReq&) const = default;
};

// Stable-checkpoint transfer: the 2f+1 vote certificate plus the snapshot.
struct CheckpointFetchResp {
    static constexpr MsgTag kTag = MsgTag::CheckpointFetchResp;

    ReplicaId sender_ = 0;
    std::uint64_t seq = 0;
    std::vector<CheckpointMsg> votes;
    Bytes snapshot;
    Bytes signature;

    SignerId sender() const { return SignerId::replica(sender_); }

    void encodeSignedBody(Encoder& enc) const {
        enc.u8(static_cast<std::uint8_t>(kTag));
        enc.u32(sender_);
        enc.u64(seq);
        enc.u32(static_cast<std::uint32_t>(votes.size()));
        for (const auto& v : votes) v.encode(enc);
        enc.bytes(snapshot);
    }

    void encode(Encoder& enc) const {
        encodeSignedBody(enc);
        enc.bytes(signature);
    }

    static CheckpointFetchResp decode(Decoder& dec) {
        CheckpointFetchResp m;
        if (dec.u8() != static_cast<std::uint8_t>(kTag)) dec.fail();
        m.sender_ = dec.u32();
        m.seq = dec.u64();
        std::uint32_t n = dec.u32();
        for (std::uint32_t i = 0; i < n && dec.ok(); ++i)
            m.votes.push_back(CheckpointMsg::decode(dec));
        m.snapshot = dec.bytes();
        m.signature = dec.bytes();
        return m;
    }

    auto operator<=>(const CheckpointFetchResp&) const = default;
};

using ProtocolMessage =
    std::variant<DepPropose, DepVerify, DepCommit, Prepare, Commit, ViewChange, NewView,
                 CheckpointMsg, QueryExec, ExecInfo, Reply, ClientSubmit, CheckpointFetchReq,
                 CheckpointFetchResp>;

Bytes encodeMessage(const ProtocolMessage& msg);
std::optional<ProtocolMessage> decodeMessage(ByteSpan data);

SignerId messageSender(const ProtocolMessage& msg);
MsgTag messageTag(const ProtocolMessage& msg);
const char* msgTagName(MsgTag tag);
std::optional<SlotId> messageSlot(const ProtocolMessage& msg);

template <typename M>
void signMessage(const Keyring& ring, M& msg) {
    Encoder enc;
    msg.encodeSignedBody(enc);
    msg.signature = ring.sign(enc.result());
}

template <typename M>
bool verifySignedMessage(const Keyring& ring, const M& msg) {
    Encoder enc;
    msg.encodeSignedBody(enc);
    return ring.verify(msg.sender(), enc.result(), msg.signature);
}

// Verifies the sender signature of any protocol message. For ClientSubmit this
// is the client signature on the carried request. Attached full requests are
// NOT checked here; handlers validate them against the signed request hash.
bool verifyMessage(const Keyring& ring, const ProtocolMessage& msg);

// h over an ordered DepVerify set, computed identically on every replica.
Digest dvSetHash(const std::vector<DepVerify>& dvs);

// Sorts by sender id; the canonical order for hashing a DepVerify set.
void sortBySender(std::vector<DepVerify>& dvs);

}  // namespace peerbft
