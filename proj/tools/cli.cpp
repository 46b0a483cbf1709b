#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "peerbft/sim/checkers.hpp"
#include "peerbft/sim/metrics.hpp"
#include "peerbft/sim/oracle.hpp"

using namespace peerbft;
using namespace peerbft::sim;

namespace {

struct CommonOpts {
    std::string scenarioFile;
    std::uint64_t seed = 0;
    bool seedSet = false;
    std::string outDir;
    std::string format = "csv";
};

Scenario loadScenario(const CommonOpts& opts) {
    Scenario sc;
    if (!opts.scenarioFile.empty()) {
        sc = Scenario::fromJsonFile(opts.scenarioFile);
    } else {
        sc.latency = Scenario::geo4Matrix();
        sc.workload.requestsPerClient = 10;
    }
    if (opts.seedSet) sc.seed = opts.seed;
    return sc;
}

void writeFile(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

int printReport(const char* what, const CheckReport& report) {
    std::cout << (report.pass ? "[PASS] " : "[FAIL] ") << what << "\n";
    for (const auto& f : report.failures) std::cout << "       " << f << "\n";
    return report.pass ? 0 : 1;
}

int runCommand(const CommonOpts& opts, bool fullChecks) {
    Scenario sc = loadScenario(opts);
    SimResult result = runSimulation(sc);
    RunMetrics metrics = computeMetrics(result);

    std::cout << "scenario '" << sc.name << "' seed " << sc.seed << ": "
              << metrics.acceptedTotal << "/" << metrics.submittedTotal
              << " requests accepted, end " << result.endTime / 1000 << " ms, "
              << result.deliveredMessages << " messages\n";
    for (const auto& s : metrics.sites)
        std::cout << "  site " << s.site << ": p50 " << s.p50 / 1000 << " ms, p90 "
                  << s.p90 / 1000 << " ms (" << s.accepted << " accepted)\n";
    std::cout << "  slots: " << metrics.fastPathSlots << " fast, "
              << metrics.reconciliationSlots << " reconciliation, " << metrics.viewChangeSlots
              << " view-change (" << metrics.noOpSlots << " no-op), unblock execs "
              << metrics.unblockExecutions << "\n";

    int rc = printReport("consistency (quiesce)", quiesceCheck(result));
    if (fullChecks) {
        rc |= printReport("dependency linkage", dependencyLinkageCheck(result));
        rc |= printReport("linearizability", linearizabilityCheck(result));
    }

    if (!opts.outDir.empty()) {
        std::filesystem::create_directories(opts.outDir);
        std::string base = opts.outDir + "/" + sc.name + "-" + std::to_string(sc.seed);
        writeFile(base + ".trace.jsonl", traceJsonl(result));
        if (opts.format == "jsonl")
            writeFile(base + ".metrics.jsonl", metricsJson(sc.name, sc.seed, metrics) + "\n");
        else
            writeFile(base + ".metrics.csv",
                      metricsCsvHeader() + "\n" + metricsCsvRow(sc.name, sc.seed, metrics));
        std::cout << "wrote " << base << ".*\n";
    }
    return rc;
}

int sweepCommand(const CommonOpts& opts, const std::string& seedRange) {
    std::uint64_t first = 1, last = 100;
    if (!seedRange.empty()) {
        auto dots = seedRange.find("..");
        if (dots == std::string::npos) {
            first = last = std::stoull(seedRange);
        } else {
            first = std::stoull(seedRange.substr(0, dots));
            last = std::stoull(seedRange.substr(dots + 2));
        }
    }

    auto catalog = adversaryCatalog();
    const double conflictRates[] = {0.0, 0.02, 0.05, 1.0};
    std::uint64_t failures = 0, runs = 0;
    std::ostringstream rows;
    rows << metricsCsvHeader() << "\n";

    for (std::uint64_t seed = first; seed <= last; ++seed) {
        Scenario sc = loadScenario(opts);
        sc.seed = seed;
        Behavior behavior = catalog[seed % catalog.size()];
        // Follower-role behaviors need a replica inside others' fast quorums.
        bool followerRole = behavior == Behavior::WithholdDepVerify ||
                            behavior == Behavior::PhantomDeps ||
                            behavior == Behavior::InflateDeps;
        ReplicaId adversary =
            followerRole ? 0 : static_cast<ReplicaId>(seed % sc.replicas);
        sc.adversaries = {{adversary, behavior, static_cast<Micros>(2'000'000)}};
        sc.workload.conflictRate = conflictRates[(seed / catalog.size()) % 4];
        sc.name = std::string(behaviorName(behavior)) + "-c" +
                  std::to_string(int(sc.workload.conflictRate * 100));

        SimResult result = runSimulation(sc);
        CheckReport q = quiesceCheck(result);
        CheckReport d = dependencyLinkageCheck(result);
        ++runs;
        if (!q.pass || !d.pass) {
            ++failures;
            std::cout << "[FAIL] seed " << seed << " " << sc.name << "\n";
            for (const auto& f : q.failures) std::cout << "       " << f << "\n";
            for (const auto& f : d.failures) std::cout << "       " << f << "\n";
        }
        rows << metricsCsvRow(sc.name, seed, computeMetrics(result));
    }
    std::cout << (failures == 0 ? "[PASS] " : "[FAIL] ") << "sweep: " << runs << " runs, "
              << failures << " violations\n";
    if (!opts.outDir.empty()) {
        std::filesystem::create_directories(opts.outDir);
        writeFile(opts.outDir + "/sweep.csv", rows.str());
        std::cout << "wrote " << opts.outDir << "/sweep.csv\n";
    }
    return failures == 0 ? 0 : 1;
}

int oracleCommand(std::uint32_t bound, std::uint32_t requests, bool crashes) {
    OracleConfig cfg;
    cfg.branchBound = bound;
    cfg.requests = requests;
    cfg.exploreCrashes = crashes;
    OracleReport report = exploreInterleavings(cfg);
    std::cout << (report.pass() ? "[PASS] " : "[FAIL] ") << "oracle: "
              << report.schedulesExplored << " schedules, " << report.violations
              << " violations, " << report.executionOrders.size()
              << " distinct execution orders, " << report.noOpOutcomes << " no-op outcomes\n";
    if (!report.counterexample.empty()) {
        std::cout << "counterexample schedule:\n";
        for (const auto& step : report.counterexample) std::cout << "  " << step << "\n";
    }
    return report.pass() ? 0 : 1;
}

int reportCommand(const std::string& inDir, const std::string& format) {
    // Aggregates per-run metric files produced by `run --out`.
    std::vector<std::string> lines;
    for (const auto& entry : std::filesystem::directory_iterator(inDir)) {
        auto path = entry.path().string();
        if (path.ends_with(".metrics.jsonl") || path.ends_with(".metrics.csv")) {
            std::ifstream in(path);
            std::string line;
            bool first = true;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                if (path.ends_with(".csv") && first && line.rfind("run,", 0) == 0) {
                    first = false;
                    continue;  // skip per-file headers
                }
                lines.push_back(line);
            }
        }
    }
    if (format == "csv") std::cout << metricsCsvHeader() << "\n";
    for (const auto& l : lines) std::cout << l << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Leaderless BFT replication: simulation and verification harness"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string seedRange;
    std::uint32_t bound = 12, requests = 2;
    bool noCrashes = false;
    std::string reportDir;

    auto addCommon = [&](CLI::App* cmd) {
        cmd->add_option("--scenario", opts.scenarioFile, "Scenario JSON file");
        cmd->add_option("--seed", opts.seed, "Seed override")->each([&](std::string) {
            opts.seedSet = true;
        });
        cmd->add_option("--out", opts.outDir, "Output directory");
        cmd->add_option("--format", opts.format, "csv|jsonl")->check(CLI::IsMember({"csv", "jsonl"}));
    };

    CLI::App* run = app.add_subcommand("run", "Run one simulation and check consistency");
    addCommon(run);
    CLI::App* sweep = app.add_subcommand("sweep", "Seeded safety sweep across the adversary catalog");
    addCommon(sweep);
    sweep->add_option("--seeds", seedRange, "Seed range A..B (default 1..100)");
    CLI::App* oracle = app.add_subcommand("oracle", "Bounded exhaustive interleaving exploration");
    oracle->add_option("--bound", bound, "Branching decisions explored exhaustively");
    oracle->add_option("--requests", requests, "Concurrent conflicting requests (1 or 2)");
    oracle->add_flag("--no-crashes", noCrashes, "Disable crash-fault choices");
    CLI::App* check = app.add_subcommand("check", "Re-run a scenario and apply every checker");
    addCommon(check);
    CLI::App* report = app.add_subcommand("report", "Aggregate metrics files from --out runs");
    report->add_option("--in", reportDir, "Directory with *.metrics.* files")->required();
    report->add_option("--format", opts.format, "csv|jsonl");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return runCommand(opts, false);
        if (sweep->parsed()) return sweepCommand(opts, seedRange);
        if (oracle->parsed()) return oracleCommand(bound, requests, !noCrashes);
        if (check->parsed()) return runCommand(opts, true);
        if (report->parsed()) return reportCommand(reportDir, opts.format);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
