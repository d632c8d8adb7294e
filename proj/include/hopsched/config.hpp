#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "hopsched/annealing.hpp"
#include "hopsched/errors.hpp"
#include "hopsched/io_util.hpp"
#include "hopsched/neural.hpp"
#include "hopsched/simulator.hpp"
#include "hopsched/workload.hpp"

namespace hopsched {

/// A solver run alongside the main one on the same window instances.
struct CompareSpec {
    SchedulerKind kind = SchedulerKind::kWindowSa;
    SaParams sa;
    bool greedy_repair = false;
    std::string policy_file;
};

/// Everything an experiment run needs, loaded from one JSON file. Missing
/// keys fall back to the defaults below.
struct ExperimentConfig {
    std::uint64_t seed = 42;

    int radix = 8;
    int pod_count = 8;
    double hop_cost = 1000.0;

    WorkloadSpec workload;

    SchedulerKind kind = SchedulerKind::kWindowSa;
    double period = 60.0;
    SaParams sa;
    bool greedy_repair = false;
    std::string policy_file;
    int n_max = 40;
    std::vector<CompareSpec> compare;

    int epochs = 10;
    int patience = 20;

    Arch arch = Arch::kCnn3;
    PpoConfig ppo;
    EnvConfig env;

    std::string out_dir = "out";
    bool verbose = false;

    std::uint64_t config_hash = 0;

    void validate() const {
        FatTree tree(radix, pod_count);
        workload.validate();
        if (workload.max_nodes > static_cast<int>(tree.node_count()))
            throw ConfigError("max_nodes exceeds the cluster size");
        sa.validate();
        if (period <= 0.0) throw ConfigError("period must be positive");
        if (epochs < 0) throw ConfigError("epochs must be nonnegative");
        if (patience < 0) throw ConfigError("patience must be nonnegative");
        if (n_max < workload.max_nodes)
            throw ConfigError("n_max must cover the largest possible request");
        ppo.validate();
        env.instance.validate();
        if (env.max_remove < 1) throw ConfigError("training env max_remove must be at least 1");
        if (env.n_max < env.instance.max_nodes)
            throw ConfigError("training env n_max must cover the largest request");
        for (const CompareSpec& c : compare) {
            if (!is_window_kind(c.kind))
                throw ConfigError("comparison solvers must be window solvers");
            c.sa.validate();
        }
        if (kind == SchedulerKind::kWindowNsa && policy_file.empty())
            throw ConfigError("window-nsa requires solver.policy_file");
        for (const CompareSpec& c : compare)
            if (c.kind == SchedulerKind::kWindowNsa && c.policy_file.empty() &&
                policy_file.empty())
                throw ConfigError("window-nsa comparison requires a policy file");
    }
};

namespace detail {

using nlohmann::json;

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

inline SaParams parse_sa(const json& j, SaParams base) {
    base.t_max_temp = get_or(j, "t_max_temp", base.t_max_temp);
    base.t_min_temp = get_or(j, "t_min_temp", base.t_min_temp);
    base.max_iters = get_or(j, "max_iters", base.max_iters);
    base.max_remove = get_or(j, "max_remove", base.max_remove);
    return base;
}

}  // namespace detail

inline ExperimentConfig load_config_json(const nlohmann::json& j) {
    using detail::get_or;
    using nlohmann::json;
    ExperimentConfig cfg;
    cfg.seed = get_or(j, "seed", cfg.seed);

    if (j.contains("topology")) {
        const json& t = j.at("topology");
        cfg.radix = get_or(t, "radix", cfg.radix);
        cfg.pod_count = get_or(t, "pod_count", cfg.pod_count);
        cfg.hop_cost = get_or(t, "hop_cost", cfg.hop_cost);
    }

    if (j.contains("workload")) {
        const json& w = j.at("workload");
        cfg.workload.job_count = get_or(w, "job_count", cfg.workload.job_count);
        cfg.workload.min_nodes = get_or(w, "min_nodes", cfg.workload.min_nodes);
        cfg.workload.max_nodes = get_or(w, "max_nodes", cfg.workload.max_nodes);
        cfg.workload.min_time = get_or(w, "min_time", cfg.workload.min_time);
        cfg.workload.max_time = get_or(w, "max_time", cfg.workload.max_time);
        cfg.workload.estimate_factor = get_or(w, "estimate_factor", cfg.workload.estimate_factor);
        if (w.contains("arrival")) {
            const json& a = w.at("arrival");
            const std::string model = get_or<std::string>(a, "model", "poisson");
            if (model == "poisson") {
                cfg.workload.arrival_model = ArrivalModel::kPoisson;
                cfg.workload.arrival_rate = get_or(a, "rate", cfg.workload.arrival_rate);
            } else if (model == "fixed") {
                cfg.workload.arrival_model = ArrivalModel::kFixed;
                cfg.workload.arrival_interval =
                    get_or(a, "interval", cfg.workload.arrival_interval);
            } else {
                throw ConfigError("arrival.model must be 'poisson' or 'fixed'");
            }
        }
    }

    if (j.contains("solver")) {
        const json& s = j.at("solver");
        cfg.kind = parse_scheduler(get_or<std::string>(s, "kind", scheduler_name(cfg.kind)));
        cfg.period = get_or(s, "period", cfg.period);
        if (s.contains("sa")) cfg.sa = detail::parse_sa(s.at("sa"), cfg.sa);
        cfg.greedy_repair = get_or(s, "greedy_repair", cfg.greedy_repair);
        cfg.policy_file = get_or<std::string>(s, "policy_file", cfg.policy_file);
        cfg.n_max = get_or(s, "n_max", cfg.n_max);
        if (s.contains("compare")) {
            for (const json& c : s.at("compare")) {
                CompareSpec spec;
                spec.kind = parse_scheduler(get_or<std::string>(c, "kind", "window-sa"));
                spec.sa = detail::parse_sa(c, cfg.sa);
                spec.greedy_repair = get_or(c, "greedy_repair", false);
                spec.policy_file = get_or<std::string>(c, "policy_file", cfg.policy_file);
                cfg.compare.push_back(std::move(spec));
            }
        }
    }

    if (j.contains("simulate")) {
        const json& s = j.at("simulate");
        cfg.epochs = get_or(s, "epochs", cfg.epochs);
        cfg.patience = get_or(s, "patience", cfg.patience);
    }

    cfg.env.instance.radix = cfg.radix;
    cfg.env.instance.pod_count = cfg.pod_count;
    cfg.env.instance.hop_cost = cfg.hop_cost;
    cfg.env.instance.max_nodes = cfg.workload.max_nodes;
    cfg.env.instance.min_nodes = cfg.workload.min_nodes;
    cfg.env.n_max = cfg.n_max;
    if (j.contains("training")) {
        const json& t = j.at("training");
        cfg.arch = parse_arch(get_or<std::string>(t, "arch", arch_name(cfg.arch)));
        if (t.contains("ppo")) {
            const json& p = t.at("ppo");
            cfg.ppo.clip_epsilon = get_or(p, "clip_epsilon", cfg.ppo.clip_epsilon);
            cfg.ppo.discount = get_or(p, "discount", cfg.ppo.discount);
            cfg.ppo.gae_lambda = get_or(p, "gae_lambda", cfg.ppo.gae_lambda);
            cfg.ppo.learning_rate = get_or(p, "learning_rate", cfg.ppo.learning_rate);
            cfg.ppo.update_epochs = get_or(p, "update_epochs", cfg.ppo.update_epochs);
            cfg.ppo.rollout_steps = get_or(p, "rollout_steps", cfg.ppo.rollout_steps);
            cfg.ppo.minibatch_size = get_or(p, "minibatch_size", cfg.ppo.minibatch_size);
            cfg.ppo.entropy_coef = get_or(p, "entropy_coef", cfg.ppo.entropy_coef);
            cfg.ppo.value_coef = get_or(p, "value_coef", cfg.ppo.value_coef);
            cfg.ppo.updates = get_or(p, "updates", cfg.ppo.updates);
        }
        if (t.contains("env")) {
            const json& e = t.at("env");
            cfg.env.q = get_or(e, "q", cfg.env.q);
            cfg.env.n_max = get_or(e, "n_max", cfg.env.n_max);
            cfg.env.max_remove = get_or(e, "max_remove", cfg.env.max_remove);
            cfg.env.instance.occupancy_lo =
                get_or(e, "occupancy_lo", cfg.env.instance.occupancy_lo);
            cfg.env.instance.occupancy_hi =
                get_or(e, "occupancy_hi", cfg.env.instance.occupancy_hi);
            cfg.env.instance.min_nodes = get_or(e, "min_nodes", cfg.env.instance.min_nodes);
            cfg.env.instance.max_nodes = get_or(e, "max_nodes", cfg.env.instance.max_nodes);
            cfg.env.instance.job_count_min =
                get_or(e, "job_count_min", cfg.env.instance.job_count_min);
            cfg.env.instance.job_count_max =
                get_or(e, "job_count_max", cfg.env.instance.job_count_max);
        }
    }

    if (j.contains("output")) {
        const json& o = j.at("output");
        cfg.out_dir = get_or<std::string>(o, "dir", cfg.out_dir);
        cfg.verbose = get_or(o, "verbose", cfg.verbose);
    }

    cfg.config_hash = fnv1a_64(j.dump());
    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot parse config " + path + ": " + e.what());
    }
    return load_config_json(j);
}

}  // namespace hopsched
