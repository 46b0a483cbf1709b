#pragma once

#include "peerbft/sim/simnet.hpp"

namespace peerbft::sim {

struct CheckReport {
    bool pass = true;
    std::vector<std::string> failures;

    void fail(std::string what) {
        pass = false;
        failures.push_back(std::move(what));
    }
    void merge(const CheckReport& other) {
        pass = pass && other.pass;
        failures.insert(failures.end(), other.failures.begin(), other.failures.end());
    }
};

// Cross-replica agreement and execution consistency over the final states:
// identical commit records per slot, identical per-key write orders,
// identical state digests, identical checkpoint records, no invariant
// violations (including the fp-commit / rp-prepare exclusion).
CheckReport quiesceCheck(const SimResult& result, bool requireClientCompletion = false);

// Every pair of committed conflicting requests is connected by at least one
// (possibly implicit) committed dependency.
CheckReport dependencyLinkageCheck(const SimResult& result);

// Per-key register semantics over the client-observed history: every accepted
// read returns the value of the latest write accepted before it was
// submitted, or of a write concurrent with it.
CheckReport linearizabilityCheck(const SimResult& result);

}  // namespace peerbft::sim
