#include "peerbft/transport/frame.hpp"

#include <cstring>

namespace peerbft::transport {

Bytes encodeFrame(ByteSpan payload) {
    Bytes out;
    out.reserve(payload.size() + 4);
    std::uint32_t n = static_cast<std::uint32_t>(payload.size());
    out.push_back(static_cast<std::uint8_t>(n >> 24));
    out.push_back(static_cast<std::uint8_t>(n >> 16));
    out.push_back(static_cast<std::uint8_t>(n >> 8));
    out.push_back(static_cast<std::uint8_t>(n));
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

bool FrameReader::feed(ByteSpan data, std::vector<Bytes>& frames) {
    buffer_.insert(buffer_.end(), data.begin(), data.end());
    while (buffer_.size() >= 4) {
        std::uint32_t n = (std::uint32_t(buffer_[0]) << 24) | (std::uint32_t(buffer_[1]) << 16) |
                          (std::uint32_t(buffer_[2]) << 8) | std::uint32_t(buffer_[3]);
        if (n > maxFrame_) return false;
        if (buffer_.size() < 4 + static_cast<size_t>(n)) break;  // need more data
        frames.emplace_back(buffer_.begin() + 4, buffer_.begin() + 4 + n);
        buffer_.erase(buffer_.begin(), buffer_.begin() + 4 + n);
    }
    return true;
}

}  // namespace peerbft::transport
