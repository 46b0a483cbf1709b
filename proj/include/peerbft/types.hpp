#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace peerbft {

using ReplicaId = std::uint32_t;
using ClientId = std::uint64_t;
using Timestamp = std::uint64_t;
using ViewNumber = std::int32_t;  // per-slot view, starts at -1

using Bytes = std::vector<std::uint8_t>;
using ByteSpan = std::span<const std::uint8_t>;

// Simulated / wall time in microseconds.
using Micros = std::int64_t;

constexpr ViewNumber kInitialView = -1;

// One agreement slot in a coordinator's private sequence.
struct SlotId {
    ReplicaId coordinator = 0;
    std::uint64_t counter = 0;

    auto operator<=>(const SlotId&) const = default;
};

struct Digest {
    std::array<std::uint8_t, 32> bytes{};

    auto operator<=>(const Digest&) const = default;
};

inline Bytes toBytes(std::string_view s) {
    return Bytes(s.begin(), s.end());
}

inline std::string toString(ByteSpan b) {
    return std::string(b.begin(), b.end());
}

std::string hexString(ByteSpan b);
std::string shortHex(const Digest& d);  // first 8 hex chars, for traces
std::string slotToString(const SlotId& s);

}  // namespace peerbft
