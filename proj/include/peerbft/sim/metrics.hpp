#pragma once

#include "peerbft/sim/simnet.hpp"

namespace peerbft::sim {

// Nearest-rank percentile: the ceil(p/100 * n)-th smallest sample.
Micros nearestRankPercentile(std::vector<Micros> samples, int percentile);

struct SiteMetrics {
    std::uint32_t site = 0;
    std::uint64_t accepted = 0;
    Micros p50 = 0;
    Micros p90 = 0;
};

struct RunMetrics {
    std::vector<SiteMetrics> sites;
    std::uint64_t acceptedTotal = 0;
    std::uint64_t submittedTotal = 0;
    double throughputPerSec = 0;  // accepted / simulated seconds
    std::uint64_t fastPathSlots = 0;
    std::uint64_t reconciliationSlots = 0;
    std::uint64_t viewChangeSlots = 0;
    std::uint64_t noOpSlots = 0;
    std::uint64_t retainedSlotsHighWater = 0;
    std::uint64_t unblockExecutions = 0;

    double fastPathShare() const {
        std::uint64_t total = fastPathSlots + reconciliationSlots + viewChangeSlots;
        return total == 0 ? 1.0 : static_cast<double>(fastPathSlots) / total;
    }
};

RunMetrics computeMetrics(const SimResult& result);

std::string metricsCsvHeader();
std::string metricsCsvRow(const std::string& runName, std::uint64_t seed,
                          const RunMetrics& metrics);
std::string metricsJson(const std::string& runName, std::uint64_t seed,
                        const RunMetrics& metrics);

// Trace output: one JSON record per line {time, actor, kind, slot, info}.
std::string traceJsonl(const SimResult& result);

}  // namespace peerbft::sim
