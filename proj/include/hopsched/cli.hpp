#pragma once

#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "hopsched/config.hpp"
#include "hopsched/instance_gen.hpp"
#include "hopsched/io_util.hpp"
#include "hopsched/neural.hpp"
#include "hopsched/policy_io.hpp"
#include "hopsched/simulator.hpp"
#include "hopsched/version.hpp"
#include "hopsched/workload.hpp"

namespace hopsched {

/// A window solver plus whatever owned state it borrows (a loaded policy).
struct SolverBundle {
    std::unique_ptr<PolicyNetwork> policy;
    std::unique_ptr<WindowSolver> solver;
};

inline SolverBundle make_window_solver(SchedulerKind kind, const SaParams& sa, bool greedy_repair,
                                       const std::string& policy_file) {
    SolverBundle b;
    switch (kind) {
        case SchedulerKind::kWindowSa:
            b.solver = std::make_unique<SaWindowSolver>(sa, greedy_repair);
            break;
        case SchedulerKind::kWindowExact:
            b.solver = std::make_unique<ExactWindowSolver>();
            break;
        case SchedulerKind::kWindowNsa: {
            auto [net, meta] = load_policy(policy_file);
            b.policy = std::make_unique<PolicyNetwork>(std::move(net));
            b.solver = std::make_unique<NsaWindowSolver>(*b.policy, meta.n_max, sa);
            break;
        }
        default:
            throw ConfigError("not a window solver kind");
    }
    return b;
}

namespace detail {

inline void write_manifest(const ExperimentConfig& cfg, const std::string& command) {
    nlohmann::json m;
    char hex[32];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(cfg.config_hash));
    m["config_hash"] = hex;
    m["seed"] = cfg.seed;
    m["version"] = kVersion;
    m["command"] = command;
    write_file(cfg.out_dir + "/manifest.json", m.dump(2) + "\n");
}

inline std::string join_nodes(const std::vector<NodeId>& nodes) {
    std::string out;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (i) out += ';';
        out += std::to_string(nodes[i]);
    }
    return out;
}

}  // namespace detail

inline int cmd_gen_workload(const ExperimentConfig& cfg, std::ostream& log) {
    std::filesystem::create_directories(cfg.out_dir);
    WorkloadSpec spec = cfg.workload;
    spec.rng_seed = mix_seed(cfg.seed, 500);
    const auto jobs = generate_workload(spec);
    const std::string path = cfg.out_dir + "/workload.csv";
    write_workload_csv(path, jobs);
    detail::write_manifest(cfg, "gen-workload");
    log << "wrote " << jobs.size() << " jobs to " << path << "\n";
    return 0;
}

inline int cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
    std::filesystem::create_directories(cfg.out_dir);
    PolicyNetwork net = make_policy_network(cfg.arch, cfg.env.q);
    init_params(net, mix_seed(cfg.seed, 77));
    RepairEnv env(cfg.env);
    Rng rng(mix_seed(cfg.seed, 78));
    log << "training " << arch_name(cfg.arch) << " for " << cfg.ppo.updates << " updates\n";
    std::vector<TrainingCurveRow> curve;
    try {
        curve = train_ppo(env, net, cfg.ppo, rng);
    } catch (const TrainingDiverged& e) {
        log << "training aborted: " << e.what() << "\n";
        return 2;
    }
    PolicyMetadata meta;
    meta.n_max = cfg.env.n_max;
    meta.radix = cfg.env.instance.radix;
    meta.pod_count = cfg.env.instance.pod_count;
    const std::string policy_path = cfg.out_dir + "/policy.bin";
    save_policy(policy_path, net, meta);
    {
        CsvWriter w(cfg.out_dir + "/curve.csv", {"update", "mean_reward", "mean_cost"});
        for (const TrainingCurveRow& r : curve)
            w.row({std::to_string(r.update), fmt_double(r.mean_reward), fmt_double(r.mean_cost)});
    }
    detail::write_manifest(cfg, "train");
    if (!curve.empty())
        log << "final mean reward " << fmt_double(curve.back().mean_reward) << ", mean cost "
            << fmt_double(curve.back().mean_cost) << "\n";
    log << "policy written to " << policy_path << "\n";
    return 0;
}

inline int cmd_simulate(const ExperimentConfig& cfg, std::ostream& log) {
    std::filesystem::create_directories(cfg.out_dir);
    FatTree tree(cfg.radix, cfg.pod_count);

    SolverBundle primary;
    std::vector<SolverBundle> comparison_bundles;
    std::vector<WindowSolver*> comparisons;
    if (is_window_kind(cfg.kind)) {
        primary = make_window_solver(cfg.kind, cfg.sa, cfg.greedy_repair, cfg.policy_file);
        for (const CompareSpec& c : cfg.compare) {
            comparison_bundles.push_back(
                make_window_solver(c.kind, c.sa, c.greedy_repair, c.policy_file));
            comparisons.push_back(comparison_bundles.back().solver.get());
        }
    }

    std::vector<EpochResult> results;
    for (int e = 1; e <= cfg.epochs; ++e) {
        WorkloadSpec spec = cfg.workload;
        spec.rng_seed = mix_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(e));
        auto jobs = generate_workload(spec);
        if (is_window_kind(cfg.kind)) {
            results.push_back(run_window_epoch(tree, cfg.hop_cost, std::move(jobs),
                                               *primary.solver, comparisons, cfg.period,
                                               cfg.patience, e,
                                               mix_seed(cfg.seed, 2000 + static_cast<std::uint64_t>(e))));
        } else {
            results.push_back(run_perjob_epoch(tree, cfg.hop_cost, std::move(jobs), cfg.kind, e));
        }
    }

    std::vector<std::string> comparison_names;
    for (const auto& c : comparisons) comparison_names.push_back(c->name());

    {
        std::vector<std::string> header = {"epoch", "jobs", "windows", "seq_cost", "solver_cost"};
        for (const auto& name : comparison_names) header.push_back("cost_" + name);
        if (comparison_names.size() == 1) header.push_back("impr");
        header.insert(header.end(), {"job_cost", "wait", "cancel_rate"});
        CsvWriter w(cfg.out_dir + "/epochs.csv", header);
        for (const EpochResult& r : results) {
            const EpochMetrics& m = r.metrics;
            std::vector<std::string> row = {std::to_string(m.epoch), std::to_string(m.jobs),
                                            std::to_string(m.windows),
                                            fmt_double(m.avg_window_seq_cost),
                                            fmt_double(m.avg_window_cost)};
            for (const auto& name : comparison_names)
                row.push_back(fmt_double(m.comparison_avg_cost.count(name)
                                             ? m.comparison_avg_cost.at(name)
                                             : 0.0));
            if (comparison_names.size() == 1) {
                const double cmp = m.comparison_avg_cost.count(comparison_names[0])
                                       ? m.comparison_avg_cost.at(comparison_names[0])
                                       : 0.0;
                row.push_back(fmt_double(cmp > 0.0 ? (cmp - m.avg_window_cost) / cmp : 0.0));
            }
            row.push_back(fmt_double(m.avg_job_cost));
            row.push_back(fmt_double(m.avg_wait));
            row.push_back(fmt_double(m.cancel_rate));
            w.row(row);
        }
    }

    {
        CsvWriter w(cfg.out_dir + "/run_log.csv",
                    {"epoch", "clock", "job_id", "nodes", "cost", "wait"});
        for (const EpochResult& r : results)
            for (const AllocationRecord& a : r.allocations)
                w.row({std::to_string(a.epoch), fmt_double(a.clock), std::to_string(a.job_id),
                       detail::join_nodes(a.nodes), fmt_double(a.cost), fmt_double(a.wait)});
    }

    {
        nlohmann::json out;
        out["scheduler"] = scheduler_name(cfg.kind);
        double cost_sum = 0.0, wait_sum = 0.0, solve_sum = 0.0;
        for (const EpochResult& r : results) {
            nlohmann::json e;
            e["epoch"] = r.metrics.epoch;
            e["jobs"] = r.metrics.jobs;
            e["windows"] = r.metrics.windows;
            e["avg_window_seq_cost"] = r.metrics.avg_window_seq_cost;
            e["avg_window_cost"] = r.metrics.avg_window_cost;
            e["avg_job_cost"] = r.metrics.avg_job_cost;
            e["avg_wait"] = r.metrics.avg_wait;
            e["cancel_rate"] = r.metrics.cancel_rate;
            e["solve_seconds"] = r.metrics.solve_seconds;
            for (const auto& [name, cost] : r.metrics.comparison_avg_cost)
                e["comparison"][name] = cost;
            out["epochs"].push_back(e);
            cost_sum += r.metrics.avg_job_cost;
            wait_sum += r.metrics.avg_wait;
            solve_sum += r.metrics.solve_seconds;
        }
        if (!results.empty()) {
            out["mean_job_cost"] = cost_sum / static_cast<double>(results.size());
            out["mean_wait"] = wait_sum / static_cast<double>(results.size());
        }
        out["total_solve_seconds"] = solve_sum;
        write_file(cfg.out_dir + "/metrics.json", out.dump(2) + "\n");
    }

    detail::write_manifest(cfg, "simulate");
    double cost_sum = 0.0, wait_sum = 0.0;
    for (const EpochResult& r : results) {
        cost_sum += r.metrics.avg_job_cost;
        wait_sum += r.metrics.avg_wait;
    }
    if (!results.empty())
        log << scheduler_name(cfg.kind) << ": mean job cost "
            << fmt_double(cost_sum / static_cast<double>(results.size())) << ", mean wait "
            << fmt_double(wait_sum / static_cast<double>(results.size())) << " over "
            << results.size() << " epochs\n";
    return 0;
}

inline int cmd_verify(const ExperimentConfig& cfg, std::ostream& log) {
    int failures = 0;
    auto report = [&](const std::string& name, bool ok, const std::string& detail = "") {
        log << (ok ? "PASS " : "FAIL ") << name;
        if (!ok && !detail.empty()) log << " (" << detail << ")";
        log << "\n";
        if (!ok) ++failures;
    };

    {
        FatTree tree(4, 4);
        std::vector<NodeId> q;
        for (NodeId i = 1; i <= 10; ++i) q.push_back(i);
        IdleSequence seq(q);
        const std::vector<NodeId> occupied = {5, 6, 7, 8};
        const auto scas = scas_feasible_starts(seq, 4, occupied);
        auto pos = seq.position_of(5);
        const auto dcas_seq = seq.erased(*pos, 4);
        const auto dcas = scas_feasible_starts(dcas_seq, 4, {});
        report("static-placement-count",
               scas.size() == 3 && dcas.size() == 6,
               "got " + std::to_string(scas.size()) + " and " + std::to_string(dcas.size()));
    }

    {
        bool ok = true;
        std::string detail;
        Rng rng(mix_seed(cfg.seed, 11));
        for (int i = 0; i < 50 && ok; ++i) {
            InstanceSpec spec;
            spec.radix = 4;
            spec.pod_count = 4;
            spec.occupancy_lo = 0.3;
            spec.occupancy_hi = 0.8;
            spec.min_nodes = 2;
            spec.max_nodes = 4;
            spec.job_count_min = 1;
            spec.job_count_max = 3;
            ScasModel model = draw_instance(spec, rng);
            const auto dp = solve_csp_dp(model, build_csp(model));
            const auto brute = solve_scas_bruteforce(model, false);
            if (dp.total_cost != brute.total_cost) {
                ok = false;
                detail = "instance " + std::to_string(i);
            }
        }
        report("exact-solver-equivalence", ok, detail);
    }

    {
        SaParams p;
        const bool ends = p.temperature(0) == 2500.0 &&
                          std::abs(p.temperature(p.max_iters) - 2.5) < 1e-9;
        bool metropolis = true;
        Rng rng(mix_seed(cfg.seed, 12));
        for (int i = 0; i < 100; ++i) {
            const double cur = rng.uniform(1000.0, 5000.0);
            const double cand = cur + rng.uniform(1.0, 2000.0);
            const double temp = rng.uniform(2.5, 2500.0);
            if (std::abs(metropolis_acceptance(cur, cand, temp) -
                         std::exp((cur - cand) / temp)) > 1e-12)
                metropolis = false;
        }
        report("annealing-schedule", ends && metropolis);
    }

    {
        bool ok = true;
        PolicyNetwork net = make_policy_network(Arch::kCnn1);
        init_params(net, mix_seed(cfg.seed, 13));
        Rng rng(mix_seed(cfg.seed, 14));
        FatTree tree(8, 8);
        for (int i = 0; i < 100 && ok; ++i) {
            std::vector<NodeId> ids;
            for (int v = 0; v < tree.node_count(); ++v)
                if (rng.uniform() < 0.5) ids.push_back(v);
            if (ids.size() < 4) continue;
            IdleSequence q(ids);
            Job job;
            job.requested_nodes = 4;
            auto [st, mask] = encode_state(tree, q, job, {}, net.q, 40);
            auto probs = policy_forward(net, st, mask);
            double legal_sum = 0.0, masked_sum = 0.0;
            for (std::size_t a = 0; a < probs.size(); ++a)
                (mask.legal[a] ? legal_sum : masked_sum) += probs[a];
            if (masked_sum >= 1e-20 || std::abs(legal_sum - 1.0) > 1e-6) ok = false;
        }
        report("action-masking", ok);
    }

    if (!cfg.policy_file.empty()) {
        bool ok = true;
        std::string detail;
        try {
            load_policy(cfg.policy_file);
        } catch (const IntegrityError& e) {
            ok = false;
            detail = e.what();
        }
        report("policy-file-integrity", ok, detail);
    }

    return failures == 0 ? 0 : 3;
}

}  // namespace hopsched
