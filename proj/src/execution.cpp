#include "peerbft/execution.hpp"
#include <cstdio>

#include <algorithm>

namespace peerbft {

void ExecutionScheduler::ingest(const CommitRecord& record) {
    if (isExecuted(record.slot)) return;
    pending_.try_emplace(record.slot, record);  // duplicate ingest is a no-op
}

std::uint64_t ExecutionScheduler::expOf(ReplicaId coordinator) const {
    auto it = exp_.find(coordinator);
    return it == exp_.end() ? 0 : it->second;
}

bool ExecutionScheduler::isExecuted(const SlotId& slot) const {
    if (slot.counter < expOf(slot.coordinator)) return true;
    auto it = executedBeyond_.find(slot.coordinator);
    return it != executedBeyond_.end() && it->second.count(slot.counter) > 0;
}

bool ExecutionScheduler::inWindow(const SlotId& slot) const {
    return slot.counter < expOf(slot.coordinator) + k_;
}

void ExecutionScheduler::markExecuted(const SlotId& slot) {
    pending_.erase(slot);
    if (isExecuted(slot)) return;
    std::uint64_t& exp = exp_[slot.coordinator];
    auto& beyond = executedBeyond_[slot.coordinator];
    if (slot.counter == exp) {
        ++exp;
        while (beyond.count(exp)) {
            beyond.erase(exp);
            ++exp;
        }
    } else {
        beyond.insert(slot.counter);
    }
    ++stats_.executedSlots;
}

std::set<SlotId> ExecutionScheduler::blockedOn() const {
    std::set<SlotId> blocked;
    for (const auto& [slot, rec] : pending_) {
        for (const auto& [rep, cnt] : rec.deps.entries()) {
            std::uint64_t exp = expOf(rep);
            if (cnt < exp) continue;
            std::uint64_t upper = std::min(cnt, exp + k_ - 1);
            for (std::uint64_t c = exp; c <= upper; ++c) {
                SlotId d{rep, c};
                if (!isExecuted(d) && !pending_.count(d)) blocked.insert(d);
            }
        }
    }
    return blocked;
}

void ExecutionScheduler::markRestored(const DependencySet& barrier) {
    lastBarrier_.mergeMax(barrier);
    for (const auto& [rep, cnt] : barrier.entries()) {
        std::uint64_t& exp = exp_[rep];
        if (exp < cnt + 1) exp = cnt + 1;
        auto& beyond = executedBeyond_[rep];
        beyond.erase(beyond.begin(), beyond.upper_bound(cnt));
        while (beyond.count(exp)) {
            beyond.erase(exp);
            ++exp;
        }
    }
    for (auto it = pending_.begin(); it != pending_.end();) {
        if (barrier.covers(it->first))
            it = pending_.erase(it);
        else
            ++it;
    }
}

std::optional<ExecutionScheduler::Closure> ExecutionScheduler::expand(
    const SlotId& from, bool ignoreOutOfWindow) {
    if (isExecuted(from) || !inWindow(from)) return std::nullopt;
    Closure closure;
    std::set<SlotId> seen{from};
    std::vector<SlotId> stack{from};
    while (!stack.empty()) {
        SlotId u = stack.back();
        stack.pop_back();
        auto rec = pending_.find(u);
        if (rec == pending_.end()) return std::nullopt;  // uncommitted blocks both cases
        for (const auto& [rep, cnt] : rec->second.deps.entries()) {
            std::uint64_t exp = expOf(rep);
            if (cnt >= exp + k_) {
                // An implied dependency beyond the window is treated as
                // missing; the exp variant skips it instead of blocking.
                if (!ignoreOutOfWindow) return std::nullopt;
                ++closure.ignoredOutOfWindow;
            }
            if (cnt < exp) continue;  // all implied slots already executed
            std::uint64_t upper = std::min(cnt, exp + k_ - 1);
            for (std::uint64_t c = exp; c <= upper; ++c) {
                SlotId d{rep, c};
                if (isExecuted(d)) continue;
                if (seen.insert(d).second) stack.push_back(d);
            }
        }
    }
    closure.nodes.assign(seen.begin(), seen.end());
    if (closure.nodes.size() > stats_.expandedHighWater)
        stats_.expandedHighWater = closure.nodes.size();
    if (closure.nodes.size() > static_cast<size_t>(replicaCount_) * k_)
        ++stats_.invariantViolations;  // expansion bound N*k exceeded
    return closure;
}

std::vector<std::vector<SlotId>> ExecutionScheduler::sccsInverseTopological(
    const Closure& closure) const {
    // Tarjan over the closure; its emission order places every component
    // after the components it depends on, which is the execution order.
    const auto& nodes = closure.nodes;
    std::map<SlotId, size_t> indexOf;
    for (size_t i = 0; i < nodes.size(); ++i) indexOf.emplace(nodes[i], i);

    std::vector<std::vector<size_t>> adj(nodes.size());
    for (size_t i = 0; i < nodes.size(); ++i) {
        auto rec = pending_.find(nodes[i]);
        if (rec == pending_.end()) continue;
        for (const auto& [rep, cnt] : rec->second.deps.entries()) {
            std::uint64_t exp = expOf(rep);
            if (cnt < exp) continue;
            std::uint64_t upper = std::min(cnt, exp + k_ - 1);
            for (std::uint64_t c = exp; c <= upper; ++c) {
                auto it = indexOf.find(SlotId{rep, c});
                if (it != indexOf.end() && it->second != i) adj[i].push_back(it->second);
            }
        }
    }

    std::vector<int> index(nodes.size(), -1), low(nodes.size(), 0);
    std::vector<bool> onStack(nodes.size(), false);
    std::vector<size_t> stack;
    std::vector<std::vector<SlotId>> sccs;
    int counter = 0;

    struct Frame {
        size_t v;
        size_t edge = 0;
    };
    for (size_t root = 0; root < nodes.size(); ++root) {
        if (index[root] != -1) continue;
        std::vector<Frame> frames{{root, 0}};
        index[root] = low[root] = counter++;
        stack.push_back(root);
        onStack[root] = true;
        while (!frames.empty()) {
            Frame& f = frames.back();
            if (f.edge < adj[f.v].size()) {
                size_t w = adj[f.v][f.edge++];
                if (index[w] == -1) {
                    index[w] = low[w] = counter++;
                    stack.push_back(w);
                    onStack[w] = true;
                    frames.push_back({w, 0});
                } else if (onStack[w]) {
                    low[f.v] = std::min(low[f.v], index[w]);
                }
            } else {
                if (low[f.v] == index[f.v]) {
                    std::vector<SlotId> scc;
                    while (true) {
                        size_t w = stack.back();
                        stack.pop_back();
                        onStack[w] = false;
                        scc.push_back(nodes[w]);
                        if (w == f.v) break;
                    }
                    std::sort(scc.begin(), scc.end());
                    sccs.push_back(std::move(scc));
                }
                size_t v = f.v;
                frames.pop_back();
                if (!frames.empty()) low[frames.back().v] = std::min(low[frames.back().v], low[v]);
            }
        }
    }
    return sccs;
}

bool ExecutionScheduler::runSccBatch(const Closure& closure, bool onlyFirstScc,
                                     const Hooks& hooks) {
    auto sccs = sccsInverseTopological(closure);
    for (const auto& scc : sccs) {
        bool hasCheckpoint = false;
        for (const auto& m : scc) {
            auto rec = pending_.find(m);
            if (rec != pending_.end() && rec->second.request.isCheckpoint()) hasCheckpoint = true;
        }
        if (hasCheckpoint) {
            executeCheckpointScc(scc, hooks);
            return true;  // remaining components reschedule from a fresh graph
        }
        for (const auto& m : scc) executeSlot(m, hooks);
        if (onlyFirstScc) return false;
    }
    return false;
}

void ExecutionScheduler::executeCheckpointScc(const std::vector<SlotId>& scc,
                                              const Hooks& hooks) {
    // Merge the dependency sets of all checkpoint requests in the component
    // and add the checkpoint slots themselves. The barrier must be identical
    // on every replica, so it is built from deterministic inputs only: the
    // previous checkpoint's barrier and the committed merged set, clamped to
    // the window. (The first-unexecuted counters are NOT usable directly: a
    // committed no-op executes at replica-local times and would make them
    // diverge.)
    DependencySet merged;
    std::vector<SlotId> cpSlots;
    for (const auto& m : scc) {
        auto rec = pending_.find(m);
        if (rec != pending_.end() && rec->second.request.isCheckpoint()) {
            merged.mergeMax(rec->second.deps);
            cpSlots.push_back(m);
        }
    }

    // Pre-barrier selection uses the unclamped covered set; component members
    // are inside the window, so clamping cannot change the selection.
    DependencySet covered = mergeCompact(merged, lastBarrier_);
    for (const auto& cp : cpSlots) covered.add(cp);
    for (const auto& m : scc) {
        if (!covered.covers(m)) continue;
        auto rec = pending_.find(m);
        if (rec != pending_.end() && rec->second.request.isCheckpoint()) {
            ExecutedRequest ev{m, rec->second.request, std::nullopt, false};
            markExecuted(m);
            if (hooks.executed) hooks.executed(ev);
        } else {
            executeSlot(m, hooks);
        }
    }

    // Clamp after the pre-barrier execution: the closure has executed every
    // in-window implied slot, so the window position is dependency-determined
    // here even when faulty verifiers injected out-of-window dependencies.
    DependencySet barrier = lastBarrier_;
    for (const auto& [rep, cnt] : merged.entries())
        barrier.add(SlotId{rep, std::min(cnt, expOf(rep) + k_ - 1)});
    for (const auto& cp : cpSlots) barrier.add(cp);

    // Barrier tightness: nothing committed-but-unexecuted may remain under it
    // when the snapshot fires.
    for (const auto& [slot, rec] : pending_)
        if (barrier.covers(slot)) {
            ++stats_.invariantViolations;
            std::fprintf(stderr, "TIGHTNESS: pending %s covered; barrier from cp",
                         slotToString(slot).c_str());
            for (const auto& cp : cpSlots)
                std::fprintf(stderr, " %s", slotToString(cp).c_str());
            std::fprintf(stderr, "\n");
        }

    lastBarrier_ = barrier;
    if (hooks.checkpoint) hooks.checkpoint({std::move(cpSlots), std::move(barrier)});
}

void ExecutionScheduler::executeSlot(const SlotId& slot, const Hooks& hooks) {
    auto rec = pending_.find(slot);
    if (rec == pending_.end()) return;
    CommitRecord record = rec->second;
    markExecuted(slot);

    switch (record.request.kind) {
        case Request::Kind::NoOp:
        case Request::Kind::Checkpoint:
            // No application state involved; checkpoint requests reaching this
            // path were covered by a merged checkpoint action already.
            if (hooks.executed) hooks.executed({slot, record.request, std::nullopt, false});
            break;
        case Request::Kind::Regular: {
            std::optional<Bytes> result = hooks.apply ? hooks.apply(record.request) : std::nullopt;
            if (hooks.executed) hooks.executed({slot, record.request, result, !result.has_value()});
            break;
        }
        case Request::Kind::Batch:
            for (const auto& member : record.request.members) {
                std::optional<Bytes> result = hooks.apply ? hooks.apply(member) : std::nullopt;
                if (hooks.executed) hooks.executed({slot, member, result, !result.has_value()});
            }
            break;
    }
}

void ExecutionScheduler::schedule(const Hooks& hooks) {
    bool progress = true;
    while (progress) {
        progress = false;

        // Normal case: a committed in-window slot whose full closure is
        // committed and inside the window executes all of its components.
        bool normal = true;
        while (normal) {
            normal = false;
            for (const auto& [slot, rec] : pending_) {
                if (!inWindow(slot)) continue;
                auto closure = expand(slot, false);
                if (!closure) continue;
                runSccBatch(*closure, false, hooks);
                normal = true;
                progress = true;
                break;  // pending_ changed; restart the scan
            }
        }

        // Unblock case: a root node blocked only by dependencies beyond the
        // window executes its first component, then back to the normal case.
        for (ReplicaId r = 0; r < replicaCount_; ++r) {
            SlotId root{r, expOf(r)};
            if (!pending_.count(root)) continue;
            auto closure = expand(root, true);
            if (!closure) continue;
            if (closure->ignoredOutOfWindow == 0) ++stats_.invariantViolations;
            ++stats_.unblockExecutions;
            if (hooks.unblocked) hooks.unblocked(root);
            runSccBatch(*closure, true, hooks);
            progress = true;
            break;
        }
    }
}

}  // namespace peerbft
