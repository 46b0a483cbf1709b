#include "peerbft/sim/workload.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace peerbft::sim {

WorkloadGenerator::WorkloadGenerator(const WorkloadSpec& spec, std::uint64_t seed)
    : spec_(spec), seed_(seed) {
    if (spec_.kind == WorkloadSpec::Kind::Zipf) {
        zipfCdf_.reserve(spec_.keyCount);
        double sum = 0;
        for (std::uint32_t i = 1; i <= spec_.keyCount; ++i)
            sum += 1.0 / std::pow(static_cast<double>(i), spec_.zipfExponent);
        double acc = 0;
        for (std::uint32_t i = 1; i <= spec_.keyCount; ++i) {
            acc += 1.0 / std::pow(static_cast<double>(i), spec_.zipfExponent) / sum;
            zipfCdf_.push_back(acc);
        }
    }
}

std::uint64_t WorkloadGenerator::mix(ClientId client, std::uint32_t seq,
                                     std::uint64_t salt) const {
    // splitmix64 over (seed, client, seq, salt)
    std::uint64_t x = seed_ ^ (client * 0x9e3779b97f4a7c15ULL) ^ (std::uint64_t(seq) << 32) ^ salt;
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double WorkloadGenerator::unitReal(ClientId client, std::uint32_t seq,
                                   std::uint64_t salt) const {
    return static_cast<double>(mix(client, seq, salt) >> 11) / 9007199254740992.0;  // 2^53
}

bool WorkloadGenerator::isSharedKey(const KvOperation& op) const {
    return op.key == toBytes("shared");
}

KvOperation WorkloadGenerator::operation(ClientId client, std::uint32_t seq) const {
    if (spec_.kind == WorkloadSpec::Kind::Micro) {
        // Writes target the shared key with probability p, a unique key
        // otherwise.
        Bytes payload(spec_.payloadBytes);
        std::uint64_t fill = mix(client, seq, 0xfeed);
        for (size_t i = 0; i < payload.size(); ++i)
            payload[i] = static_cast<std::uint8_t>(fill >> ((i % 8) * 8));
        if (unitReal(client, seq, 0x01) < spec_.conflictRate)
            return KvOperation::write(toBytes("shared"), std::move(payload));
        char buf[48];
        std::snprintf(buf, sizeof(buf), "u-%llu-%u", static_cast<unsigned long long>(client),
                      seq);
        return KvOperation::write(toBytes(buf), std::move(payload));
    }

    // Zipfian-ranked keys, reads and writes per the configured ratio.
    double u = unitReal(client, seq, 0x02);
    auto it = std::lower_bound(zipfCdf_.begin(), zipfCdf_.end(), u);
    std::uint32_t rank = static_cast<std::uint32_t>(it - zipfCdf_.begin());
    if (rank >= spec_.keyCount) rank = spec_.keyCount - 1;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "key%06u", rank);
    if (unitReal(client, seq, 0x03) < spec_.readRatio) return KvOperation::read(toBytes(buf));
    Bytes payload(spec_.payloadBytes);
    std::uint64_t fill = mix(client, seq, 0xbeef);
    for (size_t i = 0; i < payload.size(); ++i)
        payload[i] = static_cast<std::uint8_t>(fill >> ((i % 8) * 8));
    return KvOperation::write(toBytes(buf), std::move(payload));
}

}  // namespace peerbft::sim
