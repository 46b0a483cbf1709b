#include "peerbft/sim/checkers.hpp"

#include <algorithm>

namespace peerbft::sim {

namespace {

std::string slotStr(const SlotId& s) { return slotToString(s); }

// Writes applied per key, in execution order; the unit compared across
// replicas for Execution Consistency.
std::map<Bytes, std::vector<std::pair<ClientId, Timestamp>>> perKeyWrites(
    const ReplicaResult& r) {
    std::map<Bytes, std::vector<std::pair<ClientId, Timestamp>>> writes;
    for (const auto& er : r.executionLog) {
        if (er.duplicate || !er.request.isRegular()) continue;
        auto op = KvOperation::decode(
            ByteSpan(er.request.operation.data(), er.request.operation.size()));
        if (!op || op->kind != KvOperation::Kind::Write) continue;
        writes[op->key].push_back({er.request.client, er.request.timestamp});
    }
    return writes;
}

}  // namespace

CheckReport quiesceCheck(const SimResult& result, bool requireClientCompletion) {
    CheckReport report;
    std::vector<const ReplicaResult*> correct;
    for (const auto& r : result.replicas)
        if (r.correct) correct.push_back(&r);
    if (correct.empty()) {
        report.fail("no correct replicas in result");
        return report;
    }

    // Identical commit records per slot, across every pair that has the slot.
    std::map<SlotId, std::pair<Bytes, ReplicaId>> canonical;
    for (const auto* r : correct) {
        for (const auto& [slot, rec] : r->commitLog) {
            Bytes bytes = rec.encoded();
            auto [it, inserted] = canonical.try_emplace(slot, bytes, r->id);
            if (!inserted && it->second.first != bytes)
                report.fail("commit records diverge at slot " + slotStr(slot) + " between r" +
                            std::to_string(it->second.second) + " and r" + std::to_string(r->id));
        }
    }

    // Identical per-key write orders over the requests both replicas applied.
    // A replica restored from a checkpoint never re-executes covered slots,
    // so the comparison runs on the intersection; the state-digest check
    // below still demands full convergence.
    auto reference = perKeyWrites(*correct[0]);
    for (size_t i = 1; i < correct.size(); ++i) {
        auto other = perKeyWrites(*correct[i]);
        for (const auto& [key, seq] : reference) {
            auto it = other.find(key);
            if (it == other.end()) continue;
            std::set<std::pair<ClientId, Timestamp>> inA(seq.begin(), seq.end());
            std::set<std::pair<ClientId, Timestamp>> inB(it->second.begin(), it->second.end());
            std::vector<std::pair<ClientId, Timestamp>> a, b;
            for (const auto& w : seq)
                if (inB.count(w)) a.push_back(w);
            for (const auto& w : it->second)
                if (inA.count(w)) b.push_back(w);
            if (a != b)
                report.fail("per-key write order diverges on key '" +
                            toString(ByteSpan(key.data(), key.size())) + "' between r" +
                            std::to_string(correct[0]->id) + " and r" +
                            std::to_string(correct[i]->id));
        }
    }

    // Identical final state digests.
    for (size_t i = 1; i < correct.size(); ++i)
        if (correct[i]->stateDigest != correct[0]->stateDigest)
            report.fail("state digests diverge between r" + std::to_string(correct[0]->id) +
                        " and r" + std::to_string(correct[i]->id));

    // Identical checkpoint records for every sequence number in common.
    for (size_t i = 1; i < correct.size(); ++i) {
        for (const auto& a : correct[0]->checkpointLog) {
            for (const auto& b : correct[i]->checkpointLog) {
                if (a.seq != b.seq) continue;
                if (a.stateHash != b.stateHash || !(a.barrier == b.barrier))
                    report.fail("checkpoint " + std::to_string(a.seq) + " diverges between r" +
                                std::to_string(correct[0]->id) + " and r" +
                                std::to_string(correct[i]->id));
            }
        }
    }

    // Per-client applied timestamps strictly increase on every replica.
    for (const auto* r : correct) {
        std::map<ClientId, Timestamp> last;
        for (const auto& er : r->executionLog) {
            if (er.duplicate || !er.request.isRegular()) continue;
            auto [it, inserted] = last.try_emplace(er.request.client, er.request.timestamp);
            if (!inserted) {
                if (er.request.timestamp <= it->second)
                    report.fail("timestamps not increasing for client " +
                                std::to_string(er.request.client) + " at r" +
                                std::to_string(r->id));
                it->second = er.request.timestamp;
            }
        }
    }

    // Engine-level invariants, including fp-commit / rp-prepare exclusion.
    for (const auto* r : correct) {
        if (r->agreementStats.invariantViolations)
            report.fail("agreement invariant violations at r" + std::to_string(r->id));
        if (r->execStats.invariantViolations)
            report.fail("execution invariant violations at r" + std::to_string(r->id));
    }

    if (requireClientCompletion) {
        for (const auto& c : result.clients)
            for (const auto& op : c.ops)
                if (!op.accepted)
                    report.fail("client " + std::to_string(c.id) + " request ts=" +
                                std::to_string(op.timestamp) + " never accepted");
    }
    return report;
}

CheckReport dependencyLinkageCheck(const SimResult& result) {
    CheckReport report;
    // Union of committed records across correct replicas (consistent when
    // quiesceCheck passes).
    std::map<SlotId, CommitRecord> committed;
    for (const auto& r : result.replicas) {
        if (!r.correct) continue;
        for (const auto& [slot, rec] : r.commitLog) committed.emplace(slot, rec);
    }
    KvStore probe;  // conflict predicate only
    for (auto a = committed.begin(); a != committed.end(); ++a) {
        if (a->second.request.isNoOp()) continue;
        for (auto b = std::next(a); b != committed.end(); ++b) {
            if (b->second.request.isNoOp()) continue;
            if (!requestsConflict(probe, a->second.request, b->second.request)) continue;
            bool linked = a->second.deps.covers(b->first) || b->second.deps.covers(a->first);
            if (!linked)
                report.fail("conflicting " + slotStr(a->first) + " and " + slotStr(b->first) +
                            " share no committed dependency");
        }
    }
    return report;
}

CheckReport linearizabilityCheck(const SimResult& result) {
    CheckReport report;
    struct WriteOp {
        Micros submit, accept;
        Bytes value;
    };
    struct ReadOp {
        Micros submit, accept;
        Bytes result;
        ClientId client;
        Timestamp ts;
    };
    std::map<Bytes, std::vector<WriteOp>> writes;
    std::map<Bytes, std::vector<ReadOp>> reads;
    for (const auto& c : result.clients) {
        for (const auto& op : c.ops) {
            if (!op.accepted) continue;
            if (op.operation.kind == KvOperation::Kind::Write)
                writes[op.operation.key].push_back({op.submitTime, op.acceptTime,
                                                    op.operation.value});
            else
                reads[op.operation.key].push_back(
                    {op.submitTime, op.acceptTime, op.result, c.id, op.timestamp});
        }
    }

    for (const auto& [key, keyReads] : reads) {
        const auto& keyWrites = writes.count(key) ? writes.at(key) : std::vector<WriteOp>{};
        for (const auto& rd : keyReads) {
            // Valid results: the latest write accepted before the read was
            // submitted, or any write concurrent with the read.
            std::vector<Bytes> valid;
            const WriteOp* latestBefore = nullptr;
            for (const auto& w : keyWrites) {
                if (w.accept <= rd.submit) {
                    if (!latestBefore || w.accept > latestBefore->accept) latestBefore = &w;
                } else if (w.submit <= rd.accept) {
                    valid.push_back(KvResult::value(w.value));  // concurrent
                }
            }
            if (latestBefore)
                valid.push_back(KvResult::value(latestBefore->value));
            else
                valid.push_back(KvResult::absent());
            bool ok = false;
            for (const auto& v : valid)
                if (v == rd.result) ok = true;
            if (!ok)
                report.fail("client " + std::to_string(rd.client) + " read ts=" +
                            std::to_string(rd.ts) + " returned a stale value for key '" +
                            toString(ByteSpan(key.data(), key.size())) + "'");
        }
    }
    return report;
}

}  // namespace peerbft::sim
