#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hopsched/cli.hpp"
#include "hopsched/config.hpp"

namespace fs = std::filesystem;
using namespace hopsched;
using nlohmann::json;

namespace {

struct TempDir {
    fs::path path;

    explicit TempDir(const std::string& name) : path("cli_test_" + name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

json small_sim_config(const std::string& out_dir) {
    return json{
        {"seed", 7},
        {"topology", {{"radix", 4}, {"pod_count", 4}}},
        {"workload",
         {{"job_count", 30},
          {"min_nodes", 2},
          {"max_nodes", 6},
          {"min_time", 5.0},
          {"max_time", 40.0},
          {"arrival", {{"model", "poisson"}, {"rate", 0.5}}}}},
        {"solver",
         {{"kind", "window-sa"},
          {"period", 20.0},
          {"sa", {{"max_iters", 60}}},
          {"compare", json::array({json{{"kind", "window-sa"}, {"max_iters", 80}}})}}},
        {"simulate", {{"epochs", 2}, {"patience", 3}}},
        {"output", {{"dir", out_dir}}},
    };
}

}  // namespace

TEST_CASE("an empty config document yields the documented defaults") {
    const ExperimentConfig cfg = load_config_json(json::object());
    CHECK(cfg.seed == 42);
    CHECK(cfg.radix == 8);
    CHECK(cfg.pod_count == 8);
    CHECK(cfg.hop_cost == 1000.0);
    CHECK(cfg.workload.job_count == 0);
    CHECK(cfg.workload.min_nodes == 2);
    CHECK(cfg.workload.max_nodes == 40);
    CHECK(cfg.workload.arrival_model == ArrivalModel::kPoisson);
    CHECK(cfg.kind == SchedulerKind::kWindowSa);
    CHECK(cfg.period == 60.0);
    CHECK(cfg.sa.t_max_temp == 2500.0);
    CHECK(cfg.sa.t_min_temp == 2.5);
    CHECK(cfg.sa.max_iters == 500);
    CHECK(cfg.sa.max_remove == 2);
    CHECK_FALSE(cfg.greedy_repair);
    CHECK(cfg.policy_file.empty());
    CHECK(cfg.n_max == 40);
    CHECK(cfg.compare.empty());
    CHECK(cfg.epochs == 10);
    CHECK(cfg.patience == 20);
    CHECK(cfg.arch == Arch::kCnn3);
    CHECK(cfg.ppo.updates == 200);
    CHECK(cfg.env.q == 100);
    CHECK(cfg.env.n_max == 40);
    CHECK(cfg.env.max_remove == 2);
    CHECK(cfg.env.instance.radix == 8);
    CHECK(cfg.env.instance.max_nodes == 40);
    CHECK(cfg.out_dir == "out");
    CHECK_FALSE(cfg.verbose);
    CHECK(cfg.config_hash == fnv1a_64(json::object().dump()));
}

TEST_CASE("every config section reaches the corresponding fields") {
    const json j = {
        {"seed", 9001},
        {"topology", {{"radix", 4}, {"pod_count", 2}, {"hop_cost", 10.0}}},
        {"workload",
         {{"job_count", 12},
          {"min_nodes", 2},
          {"max_nodes", 4},
          {"min_time", 1.0},
          {"max_time", 2.0},
          {"estimate_factor", 1.5},
          {"arrival", {{"model", "fixed"}, {"interval", 3.5}}}}},
        {"solver",
         {{"kind", "window-exact"},
          {"period", 15.0},
          {"sa",
           {{"t_max_temp", 100.0}, {"t_min_temp", 1.0}, {"max_iters", 10}, {"max_remove", 3}}},
          {"greedy_repair", true},
          {"policy_file", "shared.bin"},
          {"n_max", 16},
          {"compare", json::array({
                          json{{"kind", "window-nsa"}, {"max_iters", 25}},
                          json{{"kind", "window-sa"}, {"greedy_repair", true}},
                      })}}},
        {"simulate", {{"epochs", 3}, {"patience", 1}}},
        {"training",
         {{"arch", "fcn-3"},
          {"ppo", {{"updates", 5}, {"rollout_steps", 64}, {"minibatch_size", 32}}},
          {"env",
           {{"q", 24},
            {"n_max", 8},
            {"max_remove", 4},
            {"occupancy_lo", 0.1},
            {"occupancy_hi", 0.5},
            {"job_count_min", 1},
            {"job_count_max", 2}}}}},
        {"output", {{"dir", "elsewhere"}, {"verbose", true}}},
    };
    const ExperimentConfig cfg = load_config_json(j);

    CHECK(cfg.seed == 9001);
    CHECK(cfg.radix == 4);
    CHECK(cfg.pod_count == 2);
    CHECK(cfg.hop_cost == 10.0);

    CHECK(cfg.workload.job_count == 12);
    CHECK(cfg.workload.max_nodes == 4);
    CHECK(cfg.workload.min_time == 1.0);
    CHECK(cfg.workload.max_time == 2.0);
    CHECK(cfg.workload.estimate_factor == 1.5);
    CHECK(cfg.workload.arrival_model == ArrivalModel::kFixed);
    CHECK(cfg.workload.arrival_interval == 3.5);

    CHECK(cfg.kind == SchedulerKind::kWindowExact);
    CHECK(cfg.period == 15.0);
    CHECK(cfg.sa.t_max_temp == 100.0);
    CHECK(cfg.sa.t_min_temp == 1.0);
    CHECK(cfg.sa.max_iters == 10);
    CHECK(cfg.sa.max_remove == 3);
    CHECK(cfg.greedy_repair);
    CHECK(cfg.policy_file == "shared.bin");
    CHECK(cfg.n_max == 16);

    REQUIRE(cfg.compare.size() == 2);
    CHECK(cfg.compare[0].kind == SchedulerKind::kWindowNsa);
    CHECK(cfg.compare[0].sa.max_iters == 25);
    CHECK(cfg.compare[0].sa.t_max_temp == 100.0);
    CHECK(cfg.compare[0].policy_file == "shared.bin");
    CHECK_FALSE(cfg.compare[0].greedy_repair);
    CHECK(cfg.compare[1].kind == SchedulerKind::kWindowSa);
    CHECK(cfg.compare[1].sa.max_iters == 10);
    CHECK(cfg.compare[1].greedy_repair);

    CHECK(cfg.epochs == 3);
    CHECK(cfg.patience == 1);

    CHECK(cfg.arch == Arch::kFcn3);
    CHECK(cfg.ppo.updates == 5);
    CHECK(cfg.ppo.rollout_steps == 64);
    CHECK(cfg.ppo.minibatch_size == 32);
    CHECK(cfg.env.q == 24);
    CHECK(cfg.env.n_max == 8);
    CHECK(cfg.env.max_remove == 4);
    CHECK(cfg.env.instance.radix == 4);
    CHECK(cfg.env.instance.pod_count == 2);
    CHECK(cfg.env.instance.hop_cost == 10.0);
    CHECK(cfg.env.instance.occupancy_lo == 0.1);
    CHECK(cfg.env.instance.occupancy_hi == 0.5);
    CHECK(cfg.env.instance.min_nodes == 2);
    CHECK(cfg.env.instance.max_nodes == 4);
    CHECK(cfg.env.instance.job_count_min == 1);
    CHECK(cfg.env.instance.job_count_max == 2);

    CHECK(cfg.out_dir == "elsewhere");
    CHECK(cfg.verbose);
}

TEST_CASE("malformed config documents are rejected") {
    CHECK_THROWS_AS(load_config_json({{"solver", {{"kind", "annealer"}}}}), ConfigError);
    CHECK_THROWS_AS(load_config_json({{"solver", {{"kind", "window-nsa"}}}}), ConfigError);
    CHECK_THROWS_AS(load_config_json({{"workload", {{"min_nodes", 1}}}}), ConfigError);
    CHECK_THROWS_AS(load_config_json({{"workload", {{"max_nodes", 200}}}}), ConfigError);
    CHECK_THROWS_AS(load_config_json({{"solver", {{"period", 0.0}}}}), ConfigError);
    CHECK_THROWS_AS(load_config_json({{"solver", {{"n_max", 10}}}}), ConfigError);
    CHECK_THROWS_AS(load_config_json({{"workload", {{"arrival", {{"model", "uniform"}}}}}}),
                    ConfigError);
    CHECK_THROWS_AS(load_config_json({{"seed", "forty-two"}}), ConfigError);
    CHECK_THROWS_AS(load_config_json({{"simulate", {{"epochs", -1}}}}), ConfigError);
    CHECK_THROWS_AS(
        load_config_json({{"solver", {{"compare", json::array({json{{"kind", "fcfs"}}})}}}}),
        ConfigError);
    CHECK_THROWS_AS(load_config_json({{"training", {{"arch", "mlp-9"}}}}), ConfigError);
    CHECK_THROWS_AS(load_config_json({{"training", {{"ppo", {{"clip_epsilon", 0.0}}}}}}),
                    ConfigError);
    CHECK_THROWS_AS(load_config_json({{"training", {{"env", {{"max_remove", 0}}}}}}),
                    ConfigError);
    CHECK_THROWS_AS(load_config_json({{"topology", {{"radix", 5}}}}), std::domain_error);
}

TEST_CASE("the config hash follows the document") {
    const json a = small_sim_config("out_a");
    const std::uint64_t h1 = load_config_json(a).config_hash;
    CHECK(load_config_json(a).config_hash == h1);

    json b = a;
    b["seed"] = 8;
    CHECK(load_config_json(b).config_hash != h1);

    json c = a;
    c["solver"]["sa"]["max_iters"] = 61;
    CHECK(load_config_json(c).config_hash != h1);
}

TEST_CASE("configs load from files with clear failure modes") {
    TempDir dir("config");

    const json j = {{"seed", 11},
                    {"topology", {{"radix", 4}, {"pod_count", 4}}},
                    {"workload", {{"max_nodes", 8}}}};
    const std::string good = dir.file("good.json");
    write_file(good, j.dump(2) + "\n");
    const ExperimentConfig from_file = load_config(good);
    const ExperimentConfig from_json = load_config_json(json::parse(read_file(good)));
    CHECK(from_file.seed == 11);
    CHECK(from_file.radix == 4);
    CHECK(from_file.workload.max_nodes == 8);
    CHECK(from_file.config_hash == from_json.config_hash);

    CHECK_THROWS_AS(load_config(dir.file("missing.json")), ConfigError);

    const std::string bad = dir.file("bad.json");
    write_file(bad, "{ not json at all\n");
    CHECK_THROWS_AS(load_config(bad), ConfigError);
}

TEST_CASE("the window solver factory builds each solver kind") {
    const SaParams sa;

    auto plain = make_window_solver(SchedulerKind::kWindowSa, sa, false, "");
    REQUIRE(plain.solver != nullptr);
    CHECK(plain.solver->name() == "sa-500");
    CHECK(plain.policy == nullptr);

    auto greedy = make_window_solver(SchedulerKind::kWindowSa, sa, true, "");
    CHECK(greedy.solver->name() == "sa-500-greedy");

    auto exact = make_window_solver(SchedulerKind::kWindowExact, sa, false, "");
    CHECK(exact.solver->name() == "exact");

    CHECK_THROWS_AS(make_window_solver(SchedulerKind::kFcfs, sa, false, ""), ConfigError);
    CHECK_THROWS_AS(make_window_solver(SchedulerKind::kWindowNsa, sa, false, "no/such/policy.bin"),
                    std::exception);

    TempDir dir("factory");
    PolicyNetwork net = make_policy_network(Arch::kFcn1, 8);
    init_params(net, 3);
    PolicyMetadata meta;
    meta.n_max = 6;
    meta.radix = 4;
    meta.pod_count = 4;
    const std::string path = dir.file("policy.bin");
    save_policy(path, net, meta);

    SaParams nsa_params;
    nsa_params.max_iters = 30;
    auto nsa = make_window_solver(SchedulerKind::kWindowNsa, nsa_params, false, path);
    CHECK(nsa.solver->name() == "nsa-30");
    CHECK(nsa.policy != nullptr);
}

TEST_CASE("gen-workload writes a reproducible workload and manifest") {
    TempDir a("gen_a");
    TempDir b("gen_b");

    json j = {{"seed", 21},
              {"workload", {{"job_count", 20}, {"max_nodes", 8}}},
              {"output", {{"dir", a.str()}}}};
    const ExperimentConfig cfg = load_config_json(j);
    std::ostringstream log;
    REQUIRE(cmd_gen_workload(cfg, log) == 0);
    CHECK(log.str().find("wrote 20 jobs") != std::string::npos);

    const auto lines = read_lines(a.file("workload.csv"));
    REQUIRE(lines.size() == 21);
    CHECK(lines[0] == "job_id,arrival,requested,processing,estimated");

    const auto jobs = read_workload_csv(a.file("workload.csv"));
    REQUIRE(jobs.size() == 20);
    for (const Job& job : jobs) {
        CHECK(job.requested_nodes >= 2);
        CHECK(job.requested_nodes <= 8);
        CHECK(job.processing_time > 0.0);
    }

    j["output"]["dir"] = b.str();
    std::ostringstream log2;
    REQUIRE(cmd_gen_workload(load_config_json(j), log2) == 0);
    CHECK(read_file(b.file("workload.csv")) == read_file(a.file("workload.csv")));

    const json manifest = json::parse(read_file(a.file("manifest.json")));
    CHECK(manifest.at("command") == "gen-workload");
    CHECK(manifest.at("seed").get<std::uint64_t>() == 21);
    CHECK(manifest.at("version").get<std::string>() == kVersion);
    const auto hex = manifest.at("config_hash").get<std::string>();
    REQUIRE(hex.size() == 16);
    std::ostringstream expect;
    expect << std::hex << std::setw(16) << std::setfill('0') << cfg.config_hash;
    CHECK(hex == expect.str());
}

TEST_CASE("simulate writes epoch, allocation, and metric artifacts") {
    TempDir a("sim_a");
    TempDir b("sim_b");

    const ExperimentConfig cfg = load_config_json(small_sim_config(a.str()));
    std::ostringstream log;
    REQUIRE(cmd_simulate(cfg, log) == 0);
    CHECK(log.str().find("window-sa: mean job cost") != std::string::npos);

    const auto epochs = read_lines(a.file("epochs.csv"));
    REQUIRE(epochs.size() == 3);
    CHECK(epochs[0] == "epoch,jobs,windows,seq_cost,solver_cost,cost_sa-80,impr,job_cost,wait,cancel_rate");
    CHECK(epochs[1].substr(0, 2) == "1,");
    CHECK(epochs[2].substr(0, 2) == "2,");

    const auto run_log = read_lines(a.file("run_log.csv"));
    REQUIRE(run_log.size() == 61);
    CHECK(run_log[0] == "epoch,clock,job_id,nodes,cost,wait");
    for (std::size_t i = 1; i < run_log.size(); ++i)
        CHECK(split_csv(run_log[i]).size() == 6);

    const json metrics = json::parse(read_file(a.file("metrics.json")));
    CHECK(metrics.at("scheduler") == "window-sa");
    REQUIRE(metrics.at("epochs").size() == 2);
    CHECK(metrics.at("epochs")[0].at("comparison").contains("sa-80"));
    CHECK(metrics.contains("mean_job_cost"));
    CHECK(metrics.contains("mean_wait"));
    CHECK(metrics.at("total_solve_seconds").get<double>() >= 0.0);

    const json manifest = json::parse(read_file(a.file("manifest.json")));
    CHECK(manifest.at("command") == "simulate");

    std::ostringstream log2;
    REQUIRE(cmd_simulate(load_config_json(small_sim_config(b.str())), log2) == 0);
    CHECK(read_file(b.file("epochs.csv")) == read_file(a.file("epochs.csv")));
    CHECK(read_file(b.file("run_log.csv")) == read_file(a.file("run_log.csv")));
}

TEST_CASE("simulate covers the per-job scheduler path") {
    TempDir dir("sim_fcfs");

    const json j = {{"seed", 3},
                    {"topology", {{"radix", 4}, {"pod_count", 4}}},
                    {"workload",
                     {{"job_count", 15},
                      {"max_nodes", 6},
                      {"min_time", 5.0},
                      {"max_time", 30.0}}},
                    {"solver", {{"kind", "fcfs"}}},
                    {"simulate", {{"epochs", 1}}},
                    {"output", {{"dir", dir.str()}}}};
    std::ostringstream log;
    REQUIRE(cmd_simulate(load_config_json(j), log) == 0);
    CHECK(log.str().find("fcfs: mean job cost") != std::string::npos);

    const auto epochs = read_lines(dir.file("epochs.csv"));
    REQUIRE(epochs.size() == 2);
    CHECK(epochs[0] == "epoch,jobs,windows,seq_cost,solver_cost,job_cost,wait,cancel_rate");

    const auto run_log = read_lines(dir.file("run_log.csv"));
    CHECK(run_log.size() == 16);

    const json metrics = json::parse(read_file(dir.file("metrics.json")));
    CHECK(metrics.at("scheduler") == "fcfs");
    CHECK(metrics.at("epochs")[0].at("windows").get<int>() == 0);
}

TEST_CASE("train writes a loadable policy and verify checks it") {
    TempDir dir("train");

    const json j = {
        {"seed", 5},
        {"topology", {{"radix", 4}, {"pod_count", 4}}},
        {"workload", {{"min_nodes", 2}, {"max_nodes", 4}}},
        {"training",
         {{"arch", "fcn-1"},
          {"ppo",
           {{"updates", 2}, {"rollout_steps", 32}, {"minibatch_size", 16}, {"update_epochs", 2}}},
          {"env", {{"q", 16}, {"n_max", 6}, {"job_count_min", 1}, {"job_count_max", 2}}}}},
        {"output", {{"dir", dir.str()}}},
    };
    const ExperimentConfig cfg = load_config_json(j);
    std::ostringstream log;
    REQUIRE(cmd_train(cfg, log) == 0);
    CHECK(log.str().find("training fcn-1 for 2 updates") != std::string::npos);
    CHECK(log.str().find("policy written to") != std::string::npos);

    const auto curve = read_lines(dir.file("curve.csv"));
    REQUIRE(curve.size() == 3);
    CHECK(curve[0] == "update,mean_reward,mean_cost");
    CHECK(split_csv(curve[1])[0] == "1");
    CHECK(split_csv(curve[2])[0] == "2");

    const std::string policy_path = dir.file("policy.bin");
    auto [net, meta] = load_policy(policy_path);
    CHECK(meta.n_max == 6);
    CHECK(meta.radix == 4);
    CHECK(meta.pod_count == 4);
    CHECK(net.q == 16);

    const json manifest = json::parse(read_file(dir.file("manifest.json")));
    CHECK(manifest.at("command") == "train");

    ExperimentConfig vcfg;
    vcfg.policy_file = policy_path;
    std::ostringstream vlog;
    CHECK(cmd_verify(vcfg, vlog) == 0);
    CHECK(vlog.str().find("PASS policy-file-integrity") != std::string::npos);

    std::string bytes = read_file(policy_path);
    bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x40);
    const std::string corrupt = dir.file("corrupt.bin");
    write_file(corrupt, bytes);
    ExperimentConfig bad;
    bad.policy_file = corrupt;
    std::ostringstream blog;
    CHECK(cmd_verify(bad, blog) == 3);
    CHECK(blog.str().find("FAIL policy-file-integrity") != std::string::npos);
}

TEST_CASE("verify reports every built-in audit as passing") {
    const ExperimentConfig cfg = load_config_json(json::object());
    std::ostringstream log;
    CHECK(cmd_verify(cfg, log) == 0);
    const std::string out = log.str();
    for (const char* name :
         {"static-placement-count", "exact-solver-equivalence", "annealing-schedule",
          "action-masking"})
        CHECK(out.find(std::string("PASS ") + name) != std::string::npos);
    CHECK(out.find("FAIL") == std::string::npos);
}
