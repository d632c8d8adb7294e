#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "hopsched/allocation.hpp"
#include "hopsched/errors.hpp"
#include "hopsched/exact.hpp"
#include "hopsched/rng.hpp"
#include "hopsched/workload.hpp"

namespace hopsched {

/// Annealing schedule knobs. temperature(t) decays exponentially from
/// t_max_temp at t=0 to t_min_temp at t=max_iters.
struct SaParams {
    double t_max_temp = 2500.0;
    double t_min_temp = 2.5;
    int max_iters = 500;
    int max_remove = 2;  // jobs removed per destroy step, upper bound

    void validate() const {
        if (!(t_min_temp > 0.0) || !(t_min_temp < t_max_temp))
            throw ConfigError("need 0 < t_min_temp < t_max_temp");
        if (max_iters < 0) throw ConfigError("max_iters must be nonnegative");
        if (max_remove < 1) throw ConfigError("max_remove must be at least 1");
    }

    double cooling_factor() const { return -std::log(t_max_temp / t_min_temp); }

    double temperature(int t) const {
        if (max_iters == 0) return t_max_temp;
        return t_max_temp *
               std::exp(cooling_factor() * static_cast<double>(t) / static_cast<double>(max_iters));
    }
};

/// One committed step of a solution: which job took which start position
/// of the then-current idle sequence.
struct Placement {
    int job_id = 0;
    std::size_t start_pos = 0;
};

/// A solution is the realized job-to-window assignment; cost is always
/// plan_cost of that assignment, so equal plans carry bit-identical costs.
/// `order` logs the start-position choices that built the solution, each
/// relative to the idle sequence its job saw when placed; for a pure
/// sequential construction, replaying the log from the model's idle
/// sequence reproduces the plan exactly. After destroy-and-repair rounds
/// the log keeps per-job provenance but is no longer replayable as a
/// whole, because surviving jobs keep nodes the replay sequence has merged
/// back.
struct SaSolution {
    std::vector<Placement> order;
    AllocationPlan plan;
    double cost = 0.0;
};

/// A solution mid-rebuild, together with the idle sequence remaining after
/// its placements.
struct PartialSolution {
    SaSolution sol;
    IdleSequence idle;
};

namespace detail {
inline const Job& job_by_id(const ScasModel& model, int job_id) {
    for (const Job& j : model.jobs)
        if (j.job_id == job_id) return j;
    throw ContractViolation("placement references unknown job " + std::to_string(job_id));
}
}  // namespace detail

/// Apply the placements one by one from the model's idle sequence.
inline PartialSolution replay_partial(const ScasModel& model,
                                      const std::vector<Placement>& order) {
    PartialSolution p;
    p.idle = model.idle;
    for (const Placement& pl : order) {
        const Job& j = detail::job_by_id(model, pl.job_id);
        const auto n = static_cast<std::size_t>(j.requested_nodes);
        auto [nodes, next] = dcas_allocate(p.idle, pl.start_pos, n);
        p.sol.plan.assignments[pl.job_id] = std::move(nodes);
        p.idle = std::move(next);
        p.sol.order.push_back(pl);
    }
    p.sol.cost = plan_cost(model.tree, p.sol.plan, model.hop_cost);
    p.sol.plan.total_cost = p.sol.cost;
    return p;
}

inline SaSolution replay(const ScasModel& model, const std::vector<Placement>& order) {
    return replay_partial(model, order).sol;
}

/// Sequential greedy construction: jobs in the model's order, each taking
/// the cheapest window of the static sequence that dodges nodes already
/// handed out. The result is expressed as a replayable placement order.
inline SaSolution initial_solution(const ScasModel& model) {
    model.validate();
    std::vector<NodeId> occupied;
    std::vector<std::pair<int, NodeId>> picks;  // job_id, first node of its window
    for (const Job& j : model.jobs) {
        const auto n = static_cast<std::size_t>(j.requested_nodes);
        auto starts = scas_feasible_starts(model.idle, n, occupied);
        if (starts.empty())
            throw InfeasibleError("no window fits job " + std::to_string(j.job_id));
        auto costs = all_window_costs(model.tree, model.idle, n, model.hop_cost);
        std::size_t best = starts[0];
        for (std::size_t s : starts)
            if (costs[s] < costs[best]) best = s;
        auto nodes = model.idle.window(best, n);
        occupied.insert(occupied.end(), nodes.begin(), nodes.end());
        picks.emplace_back(j.job_id, nodes.front());
    }
    // re-express static windows as positions of the shrinking sequence;
    // disjoint removals keep each window consecutive, so the first node
    // pins it down
    std::vector<Placement> order;
    IdleSequence q = model.idle;
    for (auto [job_id, first_node] : picks) {
        const Job& j = detail::job_by_id(model, job_id);
        auto pos = q.position_of(first_node);
        if (!pos) throw ContractViolation("window head vanished from idle sequence");
        order.push_back({job_id, *pos});
        q = q.erased(*pos, static_cast<std::size_t>(j.requested_nodes));
    }
    return replay(model, order);
}

struct DestroyResult {
    PartialSolution partial;
    std::vector<Job> removed;
};

/// Drop between 1 and max_remove uniformly chosen jobs. Surviving jobs
/// keep their nodes; the removed jobs' nodes rejoin the idle sequence at
/// their identifier-sorted positions.
inline DestroyResult destroy(const ScasModel& model, const SaSolution& sol,
                             const SaParams& params, Rng& rng) {
    const auto count = sol.plan.assignments.size();
    if (count == 0) throw std::domain_error("cannot destroy an empty solution");
    const auto cap = std::min<std::int64_t>(params.max_remove, static_cast<std::int64_t>(count));
    const auto m = static_cast<std::size_t>(rng.uniform_int(1, cap));
    auto removed_idx = rng.sample_indices(count, m);
    std::vector<char> is_removed(count, 0);
    for (std::size_t i : removed_idx) is_removed[i] = 1;

    DestroyResult out;
    std::unordered_set<NodeId> kept_nodes;
    std::unordered_set<int> removed_ids;
    std::size_t i = 0;
    for (const auto& [job_id, nodes] : sol.plan.assignments) {
        if (is_removed[i++]) {
            out.removed.push_back(detail::job_by_id(model, job_id));
            removed_ids.insert(job_id);
        } else {
            kept_nodes.insert(nodes.begin(), nodes.end());
            out.partial.sol.plan.assignments[job_id] = nodes;
        }
    }
    for (const Placement& pl : sol.order)
        if (!removed_ids.count(pl.job_id)) out.partial.sol.order.push_back(pl);

    std::vector<NodeId> idle;
    idle.reserve(model.idle.size() - kept_nodes.size());
    for (NodeId id : model.idle.nodes())
        if (!kept_nodes.count(id)) idle.push_back(id);
    out.partial.idle = IdleSequence(std::move(idle));
    out.partial.sol.cost = plan_cost(model.tree, out.partial.sol.plan, model.hop_cost);
    out.partial.sol.plan.total_cost = out.partial.sol.cost;
    return out;
}

/// Start-position policy used during repair. `pending` holds the jobs that
/// will be reinserted after the current one (already size-sorted).
class RepairOperator {
public:
    virtual ~RepairOperator() = default;
    virtual std::size_t choose_start(const ScasModel& model, const IdleSequence& idle,
                                     const Job& job, std::span<const Job> pending, Rng& rng) = 0;
    virtual std::string name() const = 0;
};

/// Reinsert the removed jobs, largest request first, each at the start
/// position the operator picks on the current sequence.
inline SaSolution repair(const ScasModel& model, PartialSolution partial, std::vector<Job> removed,
                         RepairOperator& op, Rng& rng) {
    std::stable_sort(removed.begin(), removed.end(),
                     [](const Job& a, const Job& b) { return a.requested_nodes > b.requested_nodes; });
    for (std::size_t i = 0; i < removed.size(); ++i) {
        const Job& j = removed[i];
        const auto n = static_cast<std::size_t>(j.requested_nodes);
        if (n > partial.idle.size())
            throw InfeasibleError("job " + std::to_string(j.job_id) +
                                  " no longer fits the idle sequence");
        std::span<const Job> pending(removed.data() + i + 1, removed.size() - i - 1);
        const std::size_t start = op.choose_start(model, partial.idle, j, pending, rng);
        auto [nodes, next] = dcas_allocate(partial.idle, start, n);
        partial.sol.plan.assignments[j.job_id] = std::move(nodes);
        partial.idle = std::move(next);
        partial.sol.order.push_back({j.job_id, start});
    }
    partial.sol.cost = plan_cost(model.tree, partial.sol.plan, model.hop_cost);
    partial.sol.plan.total_cost = partial.sol.cost;
    return std::move(partial.sol);
}

/// Baseline repair: any start is feasible under wrap-around, pick one
/// uniformly.
class RandomRepair final : public RepairOperator {
public:
    std::size_t choose_start(const ScasModel&, const IdleSequence& idle, const Job&,
                             std::span<const Job>, Rng& rng) override {
        return static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(idle.size()) - 1));
    }
    std::string name() const override { return "random"; }
};

/// Myopic repair: cheapest window right now, earliest position on ties.
class GreedyRepair final : public RepairOperator {
public:
    std::size_t choose_start(const ScasModel& model, const IdleSequence& idle, const Job& job,
                             std::span<const Job>, Rng&) override {
        auto costs = all_window_costs(model.tree, idle,
                                      static_cast<std::size_t>(job.requested_nodes),
                                      model.hop_cost);
        std::size_t best = 0;
        for (std::size_t p = 1; p < costs.size(); ++p)
            if (costs[p] < costs[best]) best = p;
        return best;
    }
    std::string name() const override { return "greedy"; }
};

inline SaSolution repair_random(const ScasModel& model, PartialSolution partial,
                                std::vector<Job> removed, Rng& rng) {
    RandomRepair op;
    return repair(model, std::move(partial), std::move(removed), op, rng);
}

/// Probability of moving to the candidate: 1 when it is no worse, else the
/// Boltzmann factor of the cost increase.
inline double metropolis_acceptance(double current_cost, double candidate_cost, double temp) {
    const double p = std::exp((current_cost - candidate_cost) / temp);
    return p > 1.0 ? 1.0 : p;
}

/// One iteration snapshot for offline inspection.
struct AnnealTraceRow {
    int iter = 0;
    double temperature = 0.0;
    double current_cost = 0.0;
    double best_cost = 0.0;
};

/// Destroy-and-repair annealing. Each iteration perturbs the incumbent,
/// accepts by the Metropolis rule at the current temperature, and tracks
/// the best feasible solution ever seen, which is what gets returned. An
/// iteration whose rebuild turns out infeasible is skipped with the
/// incumbent kept.
inline SaSolution anneal(const ScasModel& model, const SaParams& params, RepairOperator& op,
                         Rng& rng, std::vector<AnnealTraceRow>* trace = nullptr) {
    params.validate();
    SaSolution x = initial_solution(model);
    SaSolution best = x;
    if (x.plan.assignments.empty()) return best;
    for (int t = 1; t <= params.max_iters; ++t) {
        const double temp = params.temperature(t - 1);
        try {
            DestroyResult d = destroy(model, x, params, rng);
            SaSolution cand =
                repair(model, std::move(d.partial), std::move(d.removed), op, rng);
            if (rng.uniform() < metropolis_acceptance(x.cost, cand.cost, temp)) x = cand;
            if (cand.cost < best.cost) best = std::move(cand);
        } catch (const InfeasibleError&) {
        }
        if (trace) trace->push_back({t, temp, x.cost, best.cost});
    }
    return best;
}

}  // namespace hopsched
