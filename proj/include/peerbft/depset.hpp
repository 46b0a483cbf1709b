#pragma once

#include <map>
#include <optional>

#include "peerbft/encoding.hpp"
#include "peerbft/types.hpp"

namespace peerbft {

// Compact dependency set: per replica, the latest conflicting slot counter.
// An entry (r -> c) implies dependencies on all earlier slots of r as well.
class DependencySet {
  public:
    DependencySet() = default;

    static DependencySet of(std::initializer_list<SlotId> slots) {
        DependencySet d;
        for (const auto& s : slots) d.add(s);
        return d;
    }

    void add(const SlotId& s) {
        auto [it, inserted] = entries_.try_emplace(s.coordinator, s.counter);
        if (!inserted && it->second < s.counter) it->second = s.counter;
    }

    // Per-replica maximum; commutative and associative.
    void mergeMax(const DependencySet& other) {
        for (const auto& [rep, cnt] : other.entries_) add(SlotId{rep, cnt});
    }

    std::optional<std::uint64_t> counterFor(ReplicaId r) const {
        auto it = entries_.find(r);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    // True when the set covers this slot explicitly or implicitly.
    bool covers(const SlotId& s) const {
        auto c = counterFor(s.coordinator);
        return c.has_value() && *c >= s.counter;
    }

    bool empty() const { return entries_.empty(); }
    size_t size() const { return entries_.size(); }

    const std::map<ReplicaId, std::uint64_t>& entries() const { return entries_; }

    void encode(Encoder& enc) const {
        enc.u32(static_cast<std::uint32_t>(entries_.size()));
        for (const auto& [rep, cnt] : entries_) {
            enc.u32(rep);
            enc.u64(cnt);
        }
    }

    static DependencySet decode(Decoder& dec) {
        DependencySet d;
        std::uint32_t n = dec.u32();
        std::optional<ReplicaId> prev;
        for (std::uint32_t i = 0; i < n && dec.ok(); ++i) {
            ReplicaId rep = dec.u32();
            std::uint64_t cnt = dec.u64();
            if (prev && *prev >= rep) {
                dec.fail();  // keys must be strictly ascending
                return d;
            }
            prev = rep;
            d.entries_.emplace(rep, cnt);
        }
        return d;
    }

    auto operator<=>(const DependencySet&) const = default;

  private:
    std::map<ReplicaId, std::uint64_t> entries_;
};

inline DependencySet mergeCompact(const DependencySet& a, const DependencySet& b) {
    DependencySet out = a;
    out.mergeMax(b);
    return out;
}

}  // namespace peerbft
