#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "hopsched/cli.hpp"
#include "hopsched/config.hpp"
#include "hopsched/errors.hpp"
#include "hopsched/io_util.hpp"
#include "hopsched/version.hpp"

namespace {

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> solver;
    std::optional<int> epochs;
    std::optional<double> period;
    std::optional<int> updates;
    std::optional<std::string> arch;
    std::optional<std::string> policy;
    std::optional<int> jobs;
};

// Overrides are folded into the config JSON before loading so the manifest
// hash reflects what actually ran.
nlohmann::json build_config_json(const std::string& config_path, const Overrides& ov) {
    nlohmann::json j = nlohmann::json::object();
    if (!config_path.empty()) {
        try {
            j = nlohmann::json::parse(hopsched::read_file(config_path));
        } catch (const nlohmann::json::exception& e) {
            throw hopsched::ConfigError("cannot parse config " + config_path + ": " + e.what());
        }
    }
    if (ov.seed) j["seed"] = *ov.seed;
    if (ov.out_dir) j["output"]["dir"] = *ov.out_dir;
    if (ov.solver) j["solver"]["kind"] = *ov.solver;
    if (ov.epochs) j["simulate"]["epochs"] = *ov.epochs;
    if (ov.period) j["solver"]["period"] = *ov.period;
    if (ov.updates) j["training"]["ppo"]["updates"] = *ov.updates;
    if (ov.arch) j["training"]["arch"] = *ov.arch;
    if (ov.policy) j["solver"]["policy_file"] = *ov.policy;
    if (ov.jobs) j["workload"]["job_count"] = *ov.jobs;
    return j;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Topology-aware job allocation testbed"};
    app.set_version_flag("--version", hopsched::kVersion);
    app.require_subcommand(1);

    std::string config_path;
    Overrides ov;
    app.add_option("-c,--config", config_path, "experiment config file (JSON)");
    app.add_option("--seed", ov.seed, "override the experiment seed");
    app.add_option("--out", ov.out_dir, "override the output directory");
    app.add_option("--solver", ov.solver,
                   "override solver kind (window-sa, window-nsa, window-exact, fcfs, "
                   "easy-backfill)");
    app.add_option("--epochs", ov.epochs, "override the epoch count");
    app.add_option("--period", ov.period, "override the scheduling period in seconds");
    app.add_option("--updates", ov.updates, "override the training update count");
    app.add_option("--arch", ov.arch, "override the network architecture tag");
    app.add_option("--policy", ov.policy, "override the policy file path");
    app.add_option("--jobs", ov.jobs, "override the per-epoch job count");

    auto* train = app.add_subcommand("train", "train the repair policy");
    auto* simulate = app.add_subcommand("simulate", "run scheduling epochs");
    auto* verify = app.add_subcommand("verify", "run the built-in consistency checks");
    auto* gen = app.add_subcommand("gen-workload", "generate a workload replay file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        const hopsched::ExperimentConfig cfg =
            hopsched::load_config_json(build_config_json(config_path, ov));
        if (train->parsed()) return hopsched::cmd_train(cfg, std::cout);
        if (simulate->parsed()) return hopsched::cmd_simulate(cfg, std::cout);
        if (verify->parsed()) return hopsched::cmd_verify(cfg, std::cout);
        if (gen->parsed()) return hopsched::cmd_gen_workload(cfg, std::cout);
        return 1;
    } catch (const hopsched::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
