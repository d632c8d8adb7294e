#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hopsched/allocation.hpp"
#include "hopsched/annealing.hpp"
#include "hopsched/errors.hpp"
#include "hopsched/exact.hpp"
#include "hopsched/neural.hpp"
#include "hopsched/rng.hpp"
#include "hopsched/topology.hpp"
#include "hopsched/workload.hpp"

namespace hopsched {

enum class SchedulerKind { kWindowNsa, kWindowSa, kWindowExact, kFcfs, kEasyBackfill };

inline const char* scheduler_name(SchedulerKind k) {
    switch (k) {
        case SchedulerKind::kWindowNsa: return "window-nsa";
        case SchedulerKind::kWindowSa: return "window-sa";
        case SchedulerKind::kWindowExact: return "window-exact";
        case SchedulerKind::kFcfs: return "fcfs";
        case SchedulerKind::kEasyBackfill: return "easy-backfill";
    }
    throw ContractViolation("unknown scheduler kind");
}

inline SchedulerKind parse_scheduler(const std::string& s) {
    for (SchedulerKind k :
         {SchedulerKind::kWindowNsa, SchedulerKind::kWindowSa, SchedulerKind::kWindowExact,
          SchedulerKind::kFcfs, SchedulerKind::kEasyBackfill})
        if (s == scheduler_name(k)) return k;
    throw ConfigError("unknown scheduler '" + s + "'");
}

inline bool is_window_kind(SchedulerKind k) {
    return k == SchedulerKind::kWindowNsa || k == SchedulerKind::kWindowSa ||
           k == SchedulerKind::kWindowExact;
}

struct RunningJob {
    std::vector<NodeId> nodes;
    double finish_time = 0.0;
    double estimated_finish = 0.0;
};

struct ClusterState {
    FatTree tree;
    IdleSequence idle;
    std::map<int, RunningJob> running;
    double clock = 0.0;
};

inline ClusterState make_idle_cluster(const FatTree& tree) {
    ClusterState s;
    s.tree = tree;
    s.idle = IdleSequence::all_nodes(tree);
    return s;
}

/// Remove specific node ids (a just-started job's set) from the sequence.
inline IdleSequence erase_ids(const IdleSequence& q, const std::vector<NodeId>& ids) {
    std::unordered_set<NodeId> gone(ids.begin(), ids.end());
    std::vector<NodeId> kept;
    kept.reserve(q.size() - ids.size());
    for (NodeId id : q.nodes())
        if (!gone.count(id)) kept.push_back(id);
    if (kept.size() + ids.size() != q.size())
        throw ContractViolation("started job held nodes that were not idle");
    return IdleSequence(std::move(kept));
}

/// Finish every running job due by the clock; freed nodes rejoin the idle
/// sequence at their sorted positions, lowest job id first.
inline void complete_due_jobs(ClusterState& s) {
    std::vector<int> done;
    for (const auto& [id, r] : s.running)
        if (r.finish_time <= s.clock) done.push_back(id);
    for (int id : done) {
        s.idle = s.idle.inserted(s.running.at(id).nodes);
        s.running.erase(id);
    }
}

/// One scheduling window's solve: the realized plan, the sequential greedy
/// baseline cost, and the solver's own cost.
struct WindowSolveResult {
    AllocationPlan plan;
    double seq_cost = 0.0;
    double solver_cost = 0.0;
};

class WindowSolver {
public:
    virtual ~WindowSolver() = default;
    virtual WindowSolveResult solve(const ScasModel& model, Rng& rng) = 0;
    virtual std::string name() const = 0;
};

class GreedyWindowSolver final : public WindowSolver {
public:
    WindowSolveResult solve(const ScasModel& model, Rng&) override {
        SaSolution s = initial_solution(model);
        return {std::move(s.plan), s.cost, s.cost};
    }
    std::string name() const override { return "seq"; }
};

class SaWindowSolver final : public WindowSolver {
public:
    SaWindowSolver(SaParams params, bool greedy_repair = false)
        : params_(params), greedy_repair_(greedy_repair) {}

    WindowSolveResult solve(const ScasModel& model, Rng& rng) override {
        const double seq = initial_solution(model).cost;
        SaSolution best;
        if (greedy_repair_) {
            GreedyRepair op;
            best = anneal(model, params_, op, rng);
        } else {
            RandomRepair op;
            best = anneal(model, params_, op, rng);
        }
        return {std::move(best.plan), seq, best.cost};
    }
    std::string name() const override {
        return "sa-" + std::to_string(params_.max_iters) + (greedy_repair_ ? "-greedy" : "");
    }

private:
    SaParams params_;
    bool greedy_repair_;
};

class NsaWindowSolver final : public WindowSolver {
public:
    NsaWindowSolver(const PolicyNetwork& net, int n_max, SaParams params)
        : net_(&net), n_max_(n_max), params_(params) {}

    WindowSolveResult solve(const ScasModel& model, Rng& rng) override {
        const double seq = initial_solution(model).cost;
        NeuralRepair op(*net_, n_max_);
        SaSolution best = anneal(model, params_, op, rng);
        return {std::move(best.plan), seq, best.cost};
    }
    std::string name() const override { return "nsa-" + std::to_string(params_.max_iters); }

private:
    const PolicyNetwork* net_;
    int n_max_;
    SaParams params_;
};

class ExactWindowSolver final : public WindowSolver {
public:
    explicit ExactWindowSolver(std::size_t max_states = 50'000'000) : max_states_(max_states) {}

    WindowSolveResult solve(const ScasModel& model, Rng&) override {
        const double seq = initial_solution(model).cost;
        CspGraph graph = build_csp(model);
        std::size_t bound = model.idle.size() + 1;
        for (const auto& [size, count] : graph.demand)
            bound *= static_cast<std::size_t>(count) + 1;
        if (bound > max_states_)
            throw CapacityError("window too large for the exact solver (" +
                                std::to_string(bound) + " states)");
        AllocationPlan plan = solve_csp_dp(model, graph);
        const double cost = plan.total_cost;
        return {std::move(plan), seq, cost};
    }
    std::string name() const override { return "exact"; }

private:
    std::size_t max_states_;
};

struct AllocationRecord {
    int epoch = 0;
    double clock = 0.0;
    int job_id = 0;
    std::vector<NodeId> nodes;
    double cost = 0.0;
    double wait = 0.0;
};

struct WindowRecord {
    int epoch = 0;
    int window_index = 0;
    int jobs = 0;
    double seq_cost = 0.0;
    double solver_cost = 0.0;
    std::map<std::string, double> comparison_costs;
    double solve_seconds = 0.0;
};

struct EpochMetrics {
    int epoch = 0;
    int jobs = 0;
    int windows = 0;
    double avg_window_seq_cost = 0.0;
    double avg_window_cost = 0.0;
    std::map<std::string, double> comparison_avg_cost;
    double avg_job_cost = 0.0;
    double avg_wait = 0.0;
    double cancel_rate = 0.0;
    double solve_seconds = 0.0;
};

struct EpochResult {
    EpochMetrics metrics;
    std::vector<AllocationRecord> allocations;
    std::vector<WindowRecord> window_records;
};

namespace detail {

inline void start_job(ClusterState& s, const Job& j, std::vector<NodeId> nodes, int epoch,
                      double hop_cost, std::vector<AllocationRecord>& log) {
    AllocationRecord rec;
    rec.epoch = epoch;
    rec.clock = s.clock;
    rec.job_id = j.job_id;
    rec.cost = nodes.size() >= 2 ? ch_cost(s.tree, nodes, hop_cost) : 0.0;
    rec.wait = s.clock - j.arrival_time;
    rec.nodes = nodes;
    log.push_back(std::move(rec));
    s.idle = erase_ids(s.idle, nodes);
    RunningJob r;
    r.nodes = std::move(nodes);
    r.finish_time = s.clock + j.processing_time;
    r.estimated_finish = s.clock + j.estimated_time;
    s.running.emplace(j.job_id, std::move(r));
}

}  // namespace detail

/// One window-mode epoch: period boundaries at multiples of the period,
/// completions then admissions then a joint solve of the selected jobs.
/// Comparison solvers see the identical model each window but their plans
/// never touch cluster state. A selected set the solver cannot place is
/// retried without its lowest-priority job, which waits one more period.
inline EpochResult run_window_epoch(const FatTree& tree, double hop_cost, std::vector<Job> jobs,
                                    WindowSolver& solver,
                                    const std::vector<WindowSolver*>& comparisons, double period,
                                    int patience, int epoch, std::uint64_t seed) {
    if (period <= 0.0) throw ConfigError("window period must be positive");
    std::sort(jobs.begin(), jobs.end(), [](const Job& a, const Job& b) {
        return std::tuple(a.arrival_time, a.job_id) < std::tuple(b.arrival_time, b.job_id);
    });
    ClusterState state = make_idle_cluster(tree);
    WaitingQueue queue;
    Rng solver_rng(mix_seed(seed, 1));
    std::vector<Rng> comparison_rngs;
    for (std::size_t i = 0; i < comparisons.size(); ++i)
        comparison_rngs.emplace_back(mix_seed(seed, 100 + i));

    EpochResult out;
    out.metrics.epoch = epoch;
    out.metrics.jobs = static_cast<int>(jobs.size());
    std::size_t next_arrival = 0;
    int over_patience = 0;
    std::map<int, int> final_nwp;

    while (next_arrival < jobs.size() || !queue.empty()) {
        complete_due_jobs(state);
        while (next_arrival < jobs.size() && jobs[next_arrival].arrival_time <= state.clock)
            queue.push(jobs[next_arrival++]);

        auto [selected, deferred] = queue.select_window(static_cast<int>(state.idle.size()));
        (void)deferred;
        while (!selected.empty()) {
            ScasModel model;
            model.tree = tree;
            model.hop_cost = hop_cost;
            model.idle = state.idle;
            model.jobs = selected;
            WindowSolveResult res;
            const auto t0 = std::chrono::steady_clock::now();
            try {
                res = solver.solve(model, solver_rng);
            } catch (const InfeasibleError&) {
                Job bumped = std::move(selected.back());
                selected.pop_back();
                bumped.nwp += 1;
                queue.push(std::move(bumped));
                continue;
            }
            const auto t1 = std::chrono::steady_clock::now();

            WindowRecord win;
            win.epoch = epoch;
            win.window_index = static_cast<int>(out.window_records.size());
            win.jobs = static_cast<int>(selected.size());
            win.seq_cost = res.seq_cost;
            win.solver_cost = res.solver_cost;
            win.solve_seconds = std::chrono::duration<double>(t1 - t0).count();
            for (std::size_t i = 0; i < comparisons.size(); ++i) {
                try {
                    WindowSolveResult alt = comparisons[i]->solve(model, comparison_rngs[i]);
                    win.comparison_costs[comparisons[i]->name()] = alt.solver_cost;
                } catch (const InfeasibleError&) {
                    win.comparison_costs[comparisons[i]->name()] = res.solver_cost;
                }
            }
            out.window_records.push_back(win);

            for (const Job& j : selected) {
                final_nwp[j.job_id] = j.nwp;
                detail::start_job(state, j, res.plan.assignments.at(j.job_id), epoch, hop_cost,
                                  out.allocations);
            }
            break;
        }
        state.clock += period;
    }

    for (const auto& [id, nwp] : final_nwp)
        if (nwp > patience) ++over_patience;

    EpochMetrics& m = out.metrics;
    m.windows = static_cast<int>(out.window_records.size());
    for (const WindowRecord& w : out.window_records) {
        m.avg_window_seq_cost += w.seq_cost;
        m.avg_window_cost += w.solver_cost;
        m.solve_seconds += w.solve_seconds;
        for (const auto& [name, cost] : w.comparison_costs) m.comparison_avg_cost[name] += cost;
    }
    if (m.windows > 0) {
        m.avg_window_seq_cost /= m.windows;
        m.avg_window_cost /= m.windows;
        for (auto& [name, cost] : m.comparison_avg_cost) cost /= m.windows;
    }
    for (const AllocationRecord& r : out.allocations) {
        m.avg_job_cost += r.cost;
        m.avg_wait += r.wait;
    }
    if (!out.allocations.empty()) {
        m.avg_job_cost /= static_cast<double>(out.allocations.size());
        m.avg_wait /= static_cast<double>(out.allocations.size());
    }
    m.cancel_rate = jobs.empty() ? 0.0 : static_cast<double>(over_patience) /
                                             static_cast<double>(jobs.size());
    return out;
}

/// Event-driven epoch for the per-job baselines. FCFS starts only the
/// queue head; EASY backfilling additionally starts later jobs that cannot
/// delay the head's reservation, computed from estimated finish times.
/// Placement always takes the cheapest window of the live sequence.
inline EpochResult run_perjob_epoch(const FatTree& tree, double hop_cost, std::vector<Job> jobs,
                                    SchedulerKind kind, int epoch) {
    if (kind != SchedulerKind::kFcfs && kind != SchedulerKind::kEasyBackfill)
        throw ContractViolation("per-job epoch requires a per-job scheduler");
    std::sort(jobs.begin(), jobs.end(), [](const Job& a, const Job& b) {
        return std::tuple(a.arrival_time, a.job_id) < std::tuple(b.arrival_time, b.job_id);
    });
    ClusterState state = make_idle_cluster(tree);
    std::vector<Job> fifo;  // arrival order
    EpochResult out;
    out.metrics.epoch = epoch;
    out.metrics.jobs = static_cast<int>(jobs.size());

    auto place_greedy = [&](const Job& j) {
        const auto n = static_cast<std::size_t>(j.requested_nodes);
        auto costs = all_window_costs(state.tree, state.idle, n, hop_cost);
        std::size_t best = 0;
        for (std::size_t p = 1; p < costs.size(); ++p)
            if (costs[p] < costs[best]) best = p;
        detail::start_job(state, j, state.idle.window(best, n), epoch, hop_cost,
                          out.allocations);
    };

    auto schedule_pass = [&]() {
        while (!fifo.empty() &&
               fifo.front().requested_nodes <= static_cast<int>(state.idle.size())) {
            place_greedy(fifo.front());
            fifo.erase(fifo.begin());
        }
        if (kind != SchedulerKind::kEasyBackfill || fifo.empty()) return;

        // head reservation from estimated finishes
        const Job& head = fifo.front();
        std::vector<std::pair<double, int>> finishes;  // estimated finish, node count
        for (const auto& [id, r] : state.running)
            finishes.emplace_back(r.estimated_finish, static_cast<int>(r.nodes.size()));
        std::sort(finishes.begin(), finishes.end());
        int avail = static_cast<int>(state.idle.size());
        double shadow = state.clock;
        for (const auto& [t, count] : finishes) {
            if (avail >= head.requested_nodes) break;
            avail += count;
            shadow = t;
        }
        if (avail < head.requested_nodes) return;  // head can never run, nothing to protect
        int extra = avail - head.requested_nodes;

        for (std::size_t i = 1; i < fifo.size();) {
            const Job& j = fifo[i];
            const bool fits_now = j.requested_nodes <= static_cast<int>(state.idle.size());
            const bool ends_before_shadow = state.clock + j.estimated_time <= shadow;
            const bool within_extra = j.requested_nodes <= extra;
            if (fits_now && (ends_before_shadow || within_extra)) {
                if (!ends_before_shadow) extra -= j.requested_nodes;
                place_greedy(j);
                fifo.erase(fifo.begin() + static_cast<std::ptrdiff_t>(i));
            } else {
                ++i;
            }
        }
    };

    std::size_t next_arrival = 0;
    while (next_arrival < jobs.size() || !fifo.empty()) {
        // next event: the earliest completion or arrival after now
        double next_time = std::numeric_limits<double>::infinity();
        for (const auto& [id, r] : state.running) next_time = std::min(next_time, r.finish_time);
        if (next_arrival < jobs.size())
            next_time = std::min(next_time, jobs[next_arrival].arrival_time);
        if (!std::isfinite(next_time))
            throw ContractViolation("queue stuck with nothing running and no arrivals");
        state.clock = std::max(state.clock, next_time);
        complete_due_jobs(state);
        while (next_arrival < jobs.size() && jobs[next_arrival].arrival_time <= state.clock)
            fifo.push_back(jobs[next_arrival++]);
        schedule_pass();
    }

    EpochMetrics& m = out.metrics;
    for (const AllocationRecord& r : out.allocations) {
        m.avg_job_cost += r.cost;
        m.avg_wait += r.wait;
    }
    if (!out.allocations.empty()) {
        m.avg_job_cost /= static_cast<double>(out.allocations.size());
        m.avg_wait /= static_cast<double>(out.allocations.size());
    }
    return out;
}

}  // namespace hopsched
