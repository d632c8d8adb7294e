#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "hopsched/allocation.hpp"
#include "hopsched/errors.hpp"
#include "hopsched/topology.hpp"
#include "hopsched/workload.hpp"

namespace hopsched {

/// One scheduling window's static allocation problem: place every job on
/// a window of the (fixed) idle sequence, windows pairwise disjoint,
/// minimizing summed CH cost.
struct ScasModel {
    std::vector<Job> jobs;  // placement order = caller's priority order
    IdleSequence idle;
    FatTree tree;
    double hop_cost = 1000.0;

    void validate() const {
        std::size_t total = 0;
        for (const Job& j : jobs) {
            if (j.requested_nodes < 2)
                throw std::domain_error("jobs must request at least two nodes");
            total += static_cast<std::size_t>(j.requested_nodes);
        }
        if (total > idle.size())
            throw CapacityError("jobs request " + std::to_string(total) + " nodes but only " +
                                std::to_string(idle.size()) + " are idle");
    }
};

/// Total cost of one candidate assignment, accumulated as a right fold over
/// windows in ascending start position. Every solver scores candidates with
/// this exact fold so that equal optima compare bit-identically.
inline double fold_window_costs(std::vector<std::pair<std::size_t, double>>& windows) {
    std::sort(windows.begin(), windows.end());
    double total = 0.0;
    for (std::size_t i = windows.size(); i-- > 0;) total = windows[i].second + total;
    return total;
}

/// Exhaustive search over start-position tuples, used as the test oracle.
/// Enumerates in lexicographic tuple order and keeps the first minimum, so
/// ties resolve to the smallest tuple. allow_wrap=false restricts every
/// window to the unwrapped tail, matching the reduction the production
/// solver uses.
inline AllocationPlan solve_scas_bruteforce(const ScasModel& model, bool allow_wrap = true) {
    model.validate();
    const std::size_t m = model.idle.size();
    if (m > 64) throw std::domain_error("brute force limited to 64 idle nodes");
    const std::size_t job_count = model.jobs.size();
    AllocationPlan best_plan;
    if (job_count == 0) return best_plan;

    // per-job: window cost and occupied-position mask at every start
    std::vector<std::vector<double>> cost_at(job_count);
    std::vector<std::vector<std::uint64_t>> mask_at(job_count);
    for (std::size_t j = 0; j < job_count; ++j) {
        const auto n = static_cast<std::size_t>(model.jobs[j].requested_nodes);
        cost_at[j] = all_window_costs(model.tree, model.idle, n, model.hop_cost);
        mask_at[j].resize(m);
        for (std::size_t p = 0; p < m; ++p) {
            std::uint64_t mask = 0;
            for (std::size_t i = 0; i < n; ++i) mask |= std::uint64_t{1} << ((p + i) % m);
            mask_at[j][p] = mask;
        }
    }

    double best_cost = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> starts(job_count), best_starts;
    std::vector<std::pair<std::size_t, double>> scratch;
    auto recurse = [&](auto&& self, std::size_t j, std::uint64_t used) -> void {
        if (j == job_count) {
            scratch.clear();
            for (std::size_t i = 0; i < job_count; ++i)
                scratch.emplace_back(starts[i], cost_at[i][starts[i]]);
            const double cost = fold_window_costs(scratch);
            if (cost < best_cost) {
                best_cost = cost;
                best_starts = starts;
            }
            return;
        }
        const auto n = static_cast<std::size_t>(model.jobs[j].requested_nodes);
        if (n > m) return;
        const std::size_t last = allow_wrap ? m - 1 : m - n;
        for (std::size_t p = 0; p <= last; ++p) {
            if (used & mask_at[j][p]) continue;
            starts[j] = p;
            self(self, j + 1, used | mask_at[j][p]);
        }
    };
    recurse(recurse, 0, 0);

    if (best_starts.empty())
        throw InfeasibleError("no disjoint placement of all jobs exists");
    for (std::size_t j = 0; j < job_count; ++j) {
        const auto n = static_cast<std::size_t>(model.jobs[j].requested_nodes);
        best_plan.assignments[model.jobs[j].job_id] = model.idle.window(best_starts[j], n);
    }
    best_plan.total_cost = best_cost;
    return best_plan;
}

/// An arc that commits one job of a given size to the window starting at
/// start_pos (0-based, never wrapping).
struct OperationArc {
    std::size_t start_pos = 0;
    double weight = 0.0;
};

/// Position graph for the shortest-path reduction: one vertex per idle
/// position, zero-weight transition arcs between neighbours, and per
/// request size one operation arc for every unwrapped window.
struct CspGraph {
    std::size_t vertex_count = 0;
    std::size_t transition_arc_count = 0;
    std::map<int, std::vector<OperationArc>> arcs_by_size;
    std::map<int, int> demand;  // request size -> job count
};

inline CspGraph build_csp(const ScasModel& model) {
    model.validate();
    CspGraph g;
    const std::size_t m = model.idle.size();
    g.vertex_count = m;
    g.transition_arc_count = m == 0 ? 0 : m - 1;
    for (const Job& j : model.jobs) g.demand[j.requested_nodes] += 1;
    for (const auto& [size, count] : g.demand) {
        const auto n = static_cast<std::size_t>(size);
        if (n > m) continue;
        auto costs = all_window_costs(model.tree, model.idle, n, model.hop_cost);
        auto& arcs = g.arcs_by_size[size];
        arcs.reserve(m - n + 1);
        for (std::size_t p = 0; p + n <= m; ++p) arcs.push_back({p, costs[p]});
    }
    return g;
}

/// Size diagnostics for the dynamic program.
struct CspStats {
    std::size_t reachable_states = 0;
    std::size_t state_bound = 0;
};

/// Exact solve of the no-wrap model by dynamic programming over
/// (boundary, remaining demand) states. Boundaries run 0..n; crossing
/// boundary g to g+1 skips a position, taking a size-r operation arc at
/// boundary g consumes positions g..g+r-1, so windows can never overlap.
/// Reconstruction walks forward preferring the earliest feasible arc and,
/// at equal start, the smallest size. Chosen arcs are handed to jobs of
/// matching size in the order the model lists them.
inline AllocationPlan solve_csp_dp(const ScasModel& model, const CspGraph& graph,
                                   CspStats* stats = nullptr) {
    const std::size_t m = model.idle.size();
    std::size_t needed = 0;
    for (const auto& [size, count] : graph.demand)
        needed += static_cast<std::size_t>(size) * static_cast<std::size_t>(count);
    if (needed > m)
        throw InfeasibleError("demand of " + std::to_string(needed) + " nodes exceeds " +
                              std::to_string(m) + " idle positions");
    model.validate();

    // demand vectors live in a mixed-radix encoding
    std::vector<int> sizes, quota;
    for (const auto& [size, count] : graph.demand) {
        sizes.push_back(size);
        quota.push_back(count);
    }
    const std::size_t kinds = sizes.size();
    std::vector<std::size_t> stride(kinds);
    std::size_t radix_product = 1;
    for (std::size_t i = 0; i < kinds; ++i) {
        stride[i] = radix_product;
        radix_product *= static_cast<std::size_t>(quota[i]) + 1;
    }
    const std::size_t full = radix_product - 1;  // every quota at maximum

    const double inf = std::numeric_limits<double>::infinity();
    // cost_to_go[g * radix_product + d] = cheapest completion from boundary g
    // with demand d still unplaced
    std::vector<double> cost_to_go((m + 1) * radix_product, inf);
    cost_to_go[m * radix_product + 0] = 0.0;
    for (std::size_t g = m; g-- > 0;) {
        for (std::size_t d = 0; d < radix_product; ++d) {
            double best = cost_to_go[(g + 1) * radix_product + d];
            for (std::size_t i = 0; i < kinds; ++i) {
                const std::size_t left = (d / stride[i]) % (static_cast<std::size_t>(quota[i]) + 1);
                if (left == 0) continue;
                const auto r = static_cast<std::size_t>(sizes[i]);
                if (g + r > m) continue;
                const double w = graph.arcs_by_size.at(sizes[i])[g].weight;
                const double cand = w + cost_to_go[(g + r) * radix_product + (d - stride[i])];
                if (cand < best) best = cand;
            }
            cost_to_go[g * radix_product + d] = best;
        }
    }
    if (stats) {
        stats->state_bound = (m + 1) * radix_product;
        stats->reachable_states = 0;
        for (double v : cost_to_go)
            if (v < inf) ++stats->reachable_states;
    }
    if (!(cost_to_go[0 * radix_product + full] < inf))
        throw InfeasibleError("no path satisfies the placement demand");

    // forward walk: at each boundary take the smallest size whose arc lies
    // on an optimal path, otherwise skip one position
    std::map<int, std::vector<std::size_t>> chosen_starts;
    std::size_t g = 0, d = full;
    while (d != 0) {
        bool took = false;
        for (std::size_t i = 0; i < kinds && !took; ++i) {
            const std::size_t left = (d / stride[i]) % (static_cast<std::size_t>(quota[i]) + 1);
            if (left == 0) continue;
            const auto r = static_cast<std::size_t>(sizes[i]);
            if (g + r > m) continue;
            const double w = graph.arcs_by_size.at(sizes[i])[g].weight;
            if (w + cost_to_go[(g + r) * radix_product + (d - stride[i])] ==
                cost_to_go[g * radix_product + d]) {
                chosen_starts[sizes[i]].push_back(g);
                d -= stride[i];
                g += r;
                took = true;
            }
        }
        if (!took) {
            if (g >= m) throw ContractViolation("dp reconstruction ran off the sequence");
            ++g;
        }
    }

    AllocationPlan plan;
    std::map<int, std::size_t> next_arc;
    for (const Job& j : model.jobs) {
        auto& cursor = next_arc[j.requested_nodes];
        const auto& starts = chosen_starts[j.requested_nodes];
        if (cursor >= starts.size())
            throw ContractViolation("dp chose fewer arcs than jobs of size " +
                                    std::to_string(j.requested_nodes));
        const std::size_t start = starts[cursor++];
        const auto n = static_cast<std::size_t>(j.requested_nodes);
        plan.assignments[j.job_id] = model.idle.window(start, n);
    }
    // must be the Bellman value itself, not a re-summation: cost_to_go and
    // fold_window_costs share one accumulation order, and total_cost has to
    // stay bit-identical to the brute-force optimum
    plan.total_cost = cost_to_go[0 * radix_product + full];
    return plan;
}

}  // namespace hopsched
