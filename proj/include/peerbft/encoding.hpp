#pragma once

#include <cstring>
#include <map>
#include <optional>

#include "peerbft/types.hpp"

namespace peerbft {

// Canonical binary encoding shared by hashing, signing and the wire format.
// Fixed field order, little-endian fixed-width integers, u32 length prefixes,
// map keys in strictly ascending order. Injective on the message domain.
class Encoder {
  public:
    void u8(std::uint8_t v) { out_.push_back(v); }

    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }

    void bytes(ByteSpan b) {
        u32(static_cast<std::uint32_t>(b.size()));
        out_.insert(out_.end(), b.begin(), b.end());
    }

    void raw(ByteSpan b) { out_.insert(out_.end(), b.begin(), b.end()); }

    void digest(const Digest& d) { raw(ByteSpan(d.bytes.data(), d.bytes.size())); }

    void slot(const SlotId& s) {
        u32(s.coordinator);
        u64(s.counter);
    }

    const Bytes& result() const { return out_; }
    Bytes take() { return std::move(out_); }

  private:
    Bytes out_;
};

class Decoder {
  public:
    explicit Decoder(ByteSpan data) : data_(data) {}

    std::uint8_t u8() {
        if (!need(1)) return 0;
        return data_[pos_++];
    }

    std::uint32_t u32() {
        if (!need(4)) return 0;
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
        return v;
    }

    std::uint64_t u64() {
        if (!need(8)) return 0;
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * i);
        return v;
    }

    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }

    Bytes bytes() {
        std::uint32_t n = u32();
        if (!need(n)) return {};
        Bytes b(data_.begin() + pos_, data_.begin() + pos_ + n);
        pos_ += n;
        return b;
    }

    Digest digest() {
        Digest d;
        if (!need(d.bytes.size())) return d;
        std::memcpy(d.bytes.data(), data_.data() + pos_, d.bytes.size());
        pos_ += d.bytes.size();
        return d;
    }

    SlotId slot() {
        SlotId s;
        s.coordinator = u32();
        s.counter = u64();
        return s;
    }

    bool ok() const { return ok_; }
    void fail() { ok_ = false; }
    size_t remaining() const { return data_.size() - pos_; }

    // A complete decode must consume every byte; trailing data is an error.
    bool finish() {
        if (pos_ != data_.size()) ok_ = false;
        return ok_;
    }

  private:
    bool need(size_t n) {
        if (!ok_ || data_.size() - pos_ < n) {
            ok_ = false;
            return false;
        }
        return true;
    }

    ByteSpan data_;
    size_t pos_ = 0;
    bool ok_ = true;
};

}  // namespace peerbft
