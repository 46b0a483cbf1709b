#include "peerbft/app/application.hpp"

namespace peerbft {

namespace {

bool regularConflict(const Application& app, const Request& a, const Request& b) {
    if (a.client == b.client) return true;
    return app.operationsConflict(ByteSpan(a.operation.data(), a.operation.size()),
                                  ByteSpan(b.operation.data(), b.operation.size()));
}

}  // namespace

bool requestsConflict(const Application& app, const Request& a, const Request& b) {
    if (a.isNoOp() || b.isNoOp()) return false;
    if (a.isCheckpoint() || b.isCheckpoint()) return true;
    if (a.isBatch()) {
        for (const auto& m : a.members)
            if (requestsConflict(app, m, b)) return true;
        return false;
    }
    if (b.isBatch()) return requestsConflict(app, b, a);
    return regularConflict(app, a, b);
}

}  // namespace peerbft
