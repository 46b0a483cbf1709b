#pragma once

#include "peerbft/app/kvstore.hpp"
#include "peerbft/sim/scenario.hpp"

namespace peerbft::sim {

// Deterministic per-client operation streams. The op for (client, seq) is a
// pure function of (spec, seed, client, seq), independent of call order.
class WorkloadGenerator {
  public:
    WorkloadGenerator(const WorkloadSpec& spec, std::uint64_t seed);

    KvOperation operation(ClientId client, std::uint32_t seq) const;
    Bytes operationBytes(ClientId client, std::uint32_t seq) const {
        return operation(client, seq).encoded();
    }

    // True when the op targets the micro benchmark's shared key.
    bool isSharedKey(const KvOperation& op) const;

  private:
    std::uint64_t mix(ClientId client, std::uint32_t seq, std::uint64_t salt) const;
    double unitReal(ClientId client, std::uint32_t seq, std::uint64_t salt) const;

    WorkloadSpec spec_;
    std::uint64_t seed_;
    std::vector<double> zipfCdf_;  // over key ranks
};

}  // namespace peerbft::sim
