#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <iostream>

#include "peerbft/app/kvstore.hpp"
#include "peerbft/transport/cluster.hpp"

using namespace peerbft;
using namespace peerbft::transport;

namespace {
std::atomic<bool> gStop{false};
void onSignal(int) { gStop = true; }
}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Replica daemon: runs the replication core over framed TCP streams"};
    app.require_subcommand(1);

    std::string configPath;
    ReplicaId id = 0;
    CLI::App* serve = app.add_subcommand("serve", "Run one replica");
    serve->add_option("--config", configPath, "Cluster config JSON")->required();
    serve->add_option("--id", id, "Replica id")->required();

    std::string outPath = "cluster.json";
    std::uint32_t replicas = 4, clients = 4;
    std::uint16_t portBase = 7100;
    std::string scheme = "ed25519";
    CLI::App* gen = app.add_subcommand("genconfig", "Write a localhost cluster config");
    gen->add_option("--out", outPath, "Output path");
    gen->add_option("--replicas", replicas, "Group size (3f+1)");
    gen->add_option("--clients", clients, "Client identities to provision");
    gen->add_option("--port-base", portBase, "First listen port");
    gen->add_option("--scheme", scheme, "ed25519|tag");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            ClusterConfig::localCluster(replicas, portBase, clients, scheme).writeJsonFile(outPath);
            std::cout << "wrote " << outPath << "\n";
            return 0;
        }
        ClusterConfig cluster = ClusterConfig::fromJsonFile(configPath);
        NodeConfig nc = cluster.nodeConfigFor(id);
        Node node(nc, cluster.keyringFor(SignerId::replica(id)), std::make_unique<KvStore>());
        std::signal(SIGINT, onSignal);
        std::signal(SIGTERM, onSignal);
        std::cout << "replica " << id << " listening on " << nc.listenHost << ":"
                  << node.boundPort() << "\n";
        node.run(gStop);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
