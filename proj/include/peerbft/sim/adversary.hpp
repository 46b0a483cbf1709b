#pragma once

#include <random>

#include "peerbft/replica.hpp"
#include "peerbft/sim/scenario.hpp"

namespace peerbft::sim {

// Wraps a (behaviorally honest) replica instance and mutates, drops or splits
// its outbound traffic. Only the adversary's own messages are ever touched;
// it cannot forge other replicas' signatures.
class AdversaryShim {
  public:
    AdversaryShim(const AdversarySpec& spec, const ReplicaConfig& cfg, Keyring ring,
                  std::uint64_t inflateWindow)
        : spec_(spec), cfg_(cfg), ring_(std::move(ring)), inflateWindow_(inflateWindow) {}

    Behavior behavior() const { return spec_.behavior; }
    bool crashedAt(Micros now) const {
        return spec_.behavior == Behavior::Crash && now >= spec_.crashAt;
    }

    // Expands one outbound into the per-destination wire messages feeding the
    // network; destinations are already resolved replica ids or client ids.
    struct Wire {
        Destination dest;
        ProtocolMessage message;
    };
    std::vector<Wire> transform(const Outbound& outbound, Micros now,
                                const std::vector<ReplicaId>& replicaDests);

    // The colluding client id used by InflateDeps to fill its own sequence.
    static ClientId colludingClient(ReplicaId r) { return 1'000'000 + r; }
    bool wantsSelfTraffic() const { return spec_.behavior == Behavior::InflateDeps; }

    void noteOwnCounter(std::uint64_t next) { ownCounter_ = next; }

  private:
    template <typename M>
    M resigned(M msg) {
        signMessage(ring_, msg);
        return msg;
    }

    AdversarySpec spec_;
    ReplicaConfig cfg_;
    Keyring ring_;
    std::uint64_t inflateWindow_;   // execution window k
    std::uint64_t ownCounter_ = 0;  // adversary's own next proposal counter
};

}  // namespace peerbft::sim
