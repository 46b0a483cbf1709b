#pragma once

#include "peerbft/messages.hpp"

namespace peerbft::transport {

constexpr size_t kDefaultMaxFrame = 1 << 20;  // 1 MiB

// Length-prefixed frames: a 32-bit big-endian payload size, then the
// canonical message encoding. The payload bytes are exactly what signatures
// cover.
Bytes encodeFrame(ByteSpan payload);

inline Bytes encodeFrame(const ProtocolMessage& msg) {
    Bytes payload = encodeMessage(msg);
    return encodeFrame(ByteSpan(payload.data(), payload.size()));
}

// Streaming decoder: handles partial reads and back-to-back frames.
class FrameReader {
  public:
    explicit FrameReader(size_t maxFrame = kDefaultMaxFrame) : maxFrame_(maxFrame) {}

    // Appends raw bytes; complete payloads are appended to `frames`.
    // Returns false on protocol error (oversized frame).
    bool feed(ByteSpan data, std::vector<Bytes>& frames);

    size_t buffered() const { return buffer_.size(); }

  private:
    size_t maxFrame_;
    Bytes buffer_;
};

}  // namespace peerbft::transport
