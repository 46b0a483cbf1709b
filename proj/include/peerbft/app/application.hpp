#pragma once

#include <optional>

#include "peerbft/request.hpp"

namespace peerbft {

// Replicated application plugged into the replica: conflict detection over
// operation payloads, deterministic execution with built-in duplicate
// filtering, and canonical snapshot/restore for checkpointing.
class Application {
  public:
    virtual ~Application() = default;

    // Conflict between two Regular operation payloads. Protocol-level rules
    // (same client, sentinel requests, batches) live in requestsConflict().
    virtual bool operationsConflict(ByteSpan a, ByteSpan b) const = 0;

    // Applies one Regular request. Returns nullopt when the request is a
    // duplicate (timestamp not newer than the client's last executed one).
    virtual std::optional<Bytes> execute(const Request& request) = 0;

    // Canonical bytes covering application state plus the duplicate-filter
    // table, so snapshot digests match across replicas.
    virtual Bytes snapshot() const = 0;
    virtual bool restore(ByteSpan bytes) = 0;

    virtual Digest stateDigest() const = 0;
};

// The full conflict predicate: requests of the same client always conflict,
// no-ops conflict with nothing, checkpoint requests conflict with everything,
// batches conflict when any member does.
bool requestsConflict(const Application& app, const Request& a, const Request& b);

}  // namespace peerbft
