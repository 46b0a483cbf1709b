#include "peerbft/messages.hpp"

namespace peerbft {

Bytes encodeMessage(const ProtocolMessage& msg) {
    Encoder enc;
    std::visit([&](const auto& m) { m.encode(enc); }, msg);
    return enc.take();
}

namespace {

template <typename M>
std::optional<ProtocolMessage> decodeAs(ByteSpan data) {
    Decoder dec(data);
    M m = M::decode(dec);
    if (!dec.finish()) return std::nullopt;
    return ProtocolMessage(std::move(m));
}

}  // namespace

std::optional<ProtocolMessage> decodeMessage(ByteSpan data) {
    if (data.empty()) return std::nullopt;
    switch (static_cast<MsgTag>(data[0])) {
        case MsgTag::DepPropose: return decodeAs<DepPropose>(data);
        case MsgTag::DepVerify: return decodeAs<DepVerify>(data);
        case MsgTag::DepCommit: return decodeAs<DepCommit>(data);
        case MsgTag::Prepare: return decodeAs<Prepare>(data);
        case MsgTag::Commit: return decodeAs<Commit>(data);
        case MsgTag::ViewChange: return decodeAs<ViewChange>(data);
        case MsgTag::NewView: return decodeAs<NewView>(data);
        case MsgTag::Checkpoint: return decodeAs<CheckpointMsg>(data);
        case MsgTag::QueryExec: return decodeAs<QueryExec>(data);
        case MsgTag::ExecInfo: return decodeAs<ExecInfo>(data);
        case MsgTag::Reply: return decodeAs<Reply>(data);
        case MsgTag::ClientSubmit: return decodeAs<ClientSubmit>(data);
        case MsgTag::CheckpointFetchReq: return decodeAs<CheckpointFetchReq>(data);
        case MsgTag::CheckpointFetchResp: return decodeAs<CheckpointFetchResp>(data);
    }
    return std::nullopt;
}

SignerId messageSender(const ProtocolMessage& msg) {
    return std::visit([](const auto& m) { return m.sender(); }, msg);
}

MsgTag messageTag(const ProtocolMessage& msg) {
    return std::visit([](const auto& m) { return std::decay_t<decltype(m)>::kTag; }, msg);
}

const char* msgTagName(MsgTag tag) {
    switch (tag) {
        case MsgTag::DepPropose: return "DepPropose";
        case MsgTag::DepVerify: return "DepVerify";
        case MsgTag::DepCommit: return "DepCommit";
        case MsgTag::Prepare: return "Prepare";
        case MsgTag::Commit: return "Commit";
        case MsgTag::ViewChange: return "ViewChange";
        case MsgTag::NewView: return "NewView";
        case MsgTag::Checkpoint: return "Checkpoint";
        case MsgTag::QueryExec: return "QueryExec";
        case MsgTag::ExecInfo: return "ExecInfo";
        case MsgTag::Reply: return "Reply";
        case MsgTag::ClientSubmit: return "ClientSubmit";
        case MsgTag::CheckpointFetchReq: return "CheckpointFetchReq";
        case MsgTag::CheckpointFetchResp: return "CheckpointFetchResp";
    }
    return "Unknown";
}

std::optional<SlotId> messageSlot(const ProtocolMessage& msg) {
    return std::visit(
        [](const auto& m) -> std::optional<SlotId> {
            using M = std::decay_t<decltype(m)>;
            if constexpr (requires { m.slot; })
                return m.slot;
            else
                return std::nullopt;
            (void)sizeof(M);
        },
        msg);
}

bool verifyMessage(const Keyring& ring, const ProtocolMessage& msg) {
    return std::visit(
        [&](const auto& m) {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, ClientSubmit>)
                return verifyRequestSignature(ring, m.request);
            else
                return verifySignedMessage(ring, m);
        },
        msg);
}

Digest dvSetHash(const std::vector<DepVerify>& dvs) {
    Encoder enc;
    enc.u32(static_cast<std::uint32_t>(dvs.size()));
    for (const auto& dv : dvs) dv.encode(enc);
    return digestOf(enc.result());
}

void sortBySender(std::vector<DepVerify>& dvs) {
    std::sort(dvs.begin(), dvs.end(),
              [](const DepVerify& a, const DepVerify& b) { return a.sender_ < b.sender_; });
}

}  // namespace peerbft
