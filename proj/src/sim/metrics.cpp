#include "peerbft/sim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace peerbft::sim {

Micros nearestRankPercentile(std::vector<Micros> samples, int percentile) {
    if (samples.empty()) return 0;
    std::sort(samples.begin(), samples.end());
    size_t rank = static_cast<size_t>(
        std::ceil(percentile / 100.0 * static_cast<double>(samples.size())));
    if (rank == 0) rank = 1;
    if (rank > samples.size()) rank = samples.size();
    return samples[rank - 1];
}

RunMetrics computeMetrics(const SimResult& result) {
    RunMetrics m;
    std::map<std::uint32_t, std::vector<Micros>> bySite;
    for (const auto& c : result.clients) {
        for (const auto& op : c.ops) {
            ++m.submittedTotal;
            if (!op.accepted) continue;
            ++m.acceptedTotal;
            bySite[c.site].push_back(op.acceptTime - op.submitTime);
        }
    }
    for (auto& [site, samples] : bySite) {
        SiteMetrics sm;
        sm.site = site;
        sm.accepted = samples.size();
        sm.p50 = nearestRankPercentile(samples, 50);
        sm.p90 = nearestRankPercentile(samples, 90);
        m.sites.push_back(sm);
    }
    if (result.endTime > 0)
        m.throughputPerSec =
            static_cast<double>(m.acceptedTotal) / (static_cast<double>(result.endTime) / 1e6);

    // Per-slot path classification: a slot counts as fast path only when every
    // correct replica that committed it took the fast path; a view-change
    // commit anywhere marks it view-change.
    std::map<SlotId, int> pathClass;  // 0 fast, 1 reconciliation, 2 view change
    std::map<SlotId, bool> noOp;
    for (const auto& r : result.replicas) {
        if (!r.correct) continue;
        for (const auto& [slot, rec] : r.commitLog) noOp[slot] = rec.request.isNoOp();
    }
    for (const auto& ev : result.trace) {
        if (ev.kind != "commit") continue;
        int cls = ev.info.rfind("fast", 0) == 0              ? 0
                  : ev.info.rfind("reconciliation", 0) == 0 ? 1
                  : ev.info.rfind("viewchange", 0) == 0     ? 2
                                                            : 0;  // recovery inherits
        auto [it, inserted] = pathClass.try_emplace(ev.slot, cls);
        if (!inserted) it->second = std::max(it->second, cls);
    }
    for (const auto& [slot, cls] : pathClass) {
        if (noOp.count(slot) && noOp[slot]) {
            ++m.noOpSlots;
            ++m.viewChangeSlots;
            continue;
        }
        if (cls == 0) ++m.fastPathSlots;
        else if (cls == 1) ++m.reconciliationSlots;
        else ++m.viewChangeSlots;
    }

    for (const auto& r : result.replicas) {
        if (!r.correct) continue;
        m.retainedSlotsHighWater =
            std::max(m.retainedSlotsHighWater, r.agreementStats.retainedSlotsHighWater);
        m.unblockExecutions += r.execStats.unblockExecutions;
    }
    return m;
}

std::string metricsCsvHeader() {
    return "run,seed,site,accepted,p50_us,p90_us,throughput_per_s,fast_slots,"
           "reconciliation_slots,viewchange_slots,noop_slots,retained_high_water,"
           "unblock_execs";
}

std::string metricsCsvRow(const std::string& runName, std::uint64_t seed,
                          const RunMetrics& m) {
    std::ostringstream out;
    for (const auto& s : m.sites) {
        out << runName << "," << seed << "," << s.site << "," << s.accepted << "," << s.p50 << ","
            << s.p90 << "," << m.throughputPerSec << "," << m.fastPathSlots << ","
            << m.reconciliationSlots << "," << m.viewChangeSlots << "," << m.noOpSlots << ","
            << m.retainedSlotsHighWater << "," << m.unblockExecutions << "\n";
    }
    return out.str();
}

std::string metricsJson(const std::string& runName, std::uint64_t seed, const RunMetrics& m) {
    nlohmann::json j;
    j["run"] = runName;
    j["seed"] = seed;
    j["accepted"] = m.acceptedTotal;
    j["submitted"] = m.submittedTotal;
    j["throughput_per_s"] = m.throughputPerSec;
    j["fast_slots"] = m.fastPathSlots;
    j["reconciliation_slots"] = m.reconciliationSlots;
    j["viewchange_slots"] = m.viewChangeSlots;
    j["noop_slots"] = m.noOpSlots;
    j["retained_high_water"] = m.retainedSlotsHighWater;
    j["unblock_execs"] = m.unblockExecutions;
    nlohmann::json sites = nlohmann::json::array();
    for (const auto& s : m.sites) {
        nlohmann::json sj;
        sj["site"] = s.site;
        sj["accepted"] = s.accepted;
        sj["p50_us"] = s.p50;
        sj["p90_us"] = s.p90;
        sites.push_back(sj);
    }
    j["sites"] = sites;
    return j.dump();
}

std::string traceJsonl(const SimResult& result) {
    std::ostringstream out;
    for (const auto& ev : result.trace) {
        nlohmann::json j;
        j["time_us"] = ev.time;
        j["actor"] = ev.actor;
        j["kind"] = ev.kind;
        if (ev.actor.size() > 1 && ev.actor[0] == 'r') j["slot"] = slotToString(ev.slot);
        if (!ev.info.empty()) j["info"] = ev.info;
        out << j.dump() << "\n";
    }
    return out.str();
}

}  // namespace peerbft::sim
