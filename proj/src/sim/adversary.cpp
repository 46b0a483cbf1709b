#include "peerbft/sim/adversary.hpp"

namespace peerbft::sim {

std::vector<AdversaryShim::Wire> AdversaryShim::transform(
    const Outbound& outbound, Micros now, const std::vector<ReplicaId>& replicaDests) {
    std::vector<Wire> wires;
    auto keep = [&]() {
        if (outbound.dest.kind == Destination::Kind::Client) {
            wires.push_back({outbound.dest, outbound.message});
        } else {
            for (ReplicaId d : replicaDests) wires.push_back({Destination::to(d), outbound.message});
        }
    };

    if (crashedAt(now)) return wires;  // silence

    switch (spec_.behavior) {
        case Behavior::Honest:
        case Behavior::Crash:
            keep();
            break;

        case Behavior::WithholdDepVerify:
            if (std::holds_alternative<DepVerify>(outbound.message)) break;  // never sent
            keep();
            break;

        case Behavior::SilentCoordinator: {
            const auto* dp = std::get_if<DepPropose>(&outbound.message);
            if (dp && dp->coordinator == cfg_.id) {
                // Deliver the proposal to exactly one replica.
                for (ReplicaId d : replicaDests) {
                    if (d != cfg_.id) {
                        wires.push_back({Destination::to(d), outbound.message});
                        break;
                    }
                }
            } else {
                keep();
            }
            break;
        }

        case Behavior::EquivocateDepPropose: {
            const auto* dp = std::get_if<DepPropose>(&outbound.message);
            if (dp && dp->coordinator == cfg_.id &&
                outbound.dest.kind != Destination::Kind::Client) {
                // Same slot, same request, different fast quorum: the two
                // halves of the group verify incompatible proposals.
                DepPropose variant = *dp;
                auto cycle = fastQuorumCycle(cfg_.id, cfg_.replicaCount, cfg_.fastQuorumSize());
                for (size_t i = 0; i < cycle.size(); ++i)
                    if (cycle[i] == dp->fastQuorum) {
                        variant.fastQuorum = cycle[(i + 1) % cycle.size()];
                        break;
                    }
                signMessage(ring_, variant);
                bool flip = false;
                for (ReplicaId d : replicaDests) {
                    wires.push_back({Destination::to(d),
                                     flip ? ProtocolMessage{variant} : outbound.message});
                    flip = !flip;
                }
            } else {
                keep();
            }
            break;
        }

        case Behavior::PhantomDeps: {
            const auto* dv = std::get_if<DepVerify>(&outbound.message);
            if (dv && dv->sender_ == cfg_.id) {
                DepVerify bad = *dv;
                // A dependency on a slot nobody ever proposed, within the
                // ordering window so it is not rejected outright.
                bad.deps.add(SlotId{(cfg_.id + 1) % cfg_.replicaCount, 77});
                bad = resigned(bad);
                for (ReplicaId d : replicaDests) wires.push_back({Destination::to(d), bad});
            } else {
                keep();
            }
            break;
        }

        case Behavior::InflateDeps: {
            const auto* dv = std::get_if<DepVerify>(&outbound.message);
            if (dv && dv->sender_ == cfg_.id && ownCounter_ > 0) {
                DepVerify bad = *dv;
                // Point into our own future sequence, beyond the execution
                // window; the colluding client keeps proposing so the slot
                // exists and eventually commits.
                std::uint64_t target = ownCounter_ + inflateWindow_ + 1;
                if (target % cfg_.cpInterval == 0) ++target;  // cp slots carry CpReq only
                bad.deps.add(SlotId{cfg_.id, target});
                bad = resigned(bad);
                for (ReplicaId d : replicaDests) wires.push_back({Destination::to(d), bad});
            } else {
                keep();
            }
            break;
        }

        case Behavior::DivergentCheckpointVote: {
            const auto* cp = std::get_if<CheckpointMsg>(&outbound.message);
            if (cp && cp->sender_ == cfg_.id) {
                CheckpointMsg bad = *cp;
                bad.stateHash.bytes[0] ^= 0x5a;
                bad = resigned(bad);
                for (ReplicaId d : replicaDests) wires.push_back({Destination::to(d), bad});
            } else {
                keep();
            }
            break;
        }

        case Behavior::BadNewView: {
            // Starve own proposals so view changes happen with this replica
            // as the view-0 coordinator, then sabotage the NewView it owes.
            if (const auto* dp = std::get_if<DepPropose>(&outbound.message);
                dp && dp->coordinator == cfg_.id) {
                for (ReplicaId d : replicaDests) {
                    if (d != cfg_.id) {
                        wires.push_back({Destination::to(d), outbound.message});
                        break;
                    }
                }
                break;
            }
            const auto* nv = std::get_if<NewView>(&outbound.message);
            if (nv && nv->coordinator == cfg_.id) {
                if (nv->selection == NewView::Selection::NoOp) break;  // stay silent
                NewView bad = *nv;
                bad.selection = NewView::Selection::NoOp;  // violates the selection rule
                bad.depPropose.reset();
                bad.dvSet.clear();
                bad = resigned(bad);
                for (ReplicaId d : replicaDests) wires.push_back({Destination::to(d), bad});
            } else {
                keep();
            }
            break;
        }
    }
    return wires;
}

}  // namespace peerbft::sim
