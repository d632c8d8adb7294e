#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "hopsched/annealing.hpp"
#include "hopsched/errors.hpp"
#include "hopsched/exact.hpp"
#include "hopsched/rng.hpp"
#include "hopsched/topology.hpp"
#include "hopsched/workload.hpp"

namespace hopsched {

/// Distribution of one-shot placement instances: a partially busy cluster
/// plus a batch of jobs to place. job_count_min = 0 selects capacity-fill
/// mode (keep drawing jobs until one no longer fits); otherwise the batch
/// size is drawn uniformly from [job_count_min, job_count_max] and the
/// whole draw is retried until the batch fits the idle capacity.
struct InstanceSpec {
    int radix = 8;
    int pod_count = 8;
    double hop_cost = 1000.0;
    double occupancy_lo = 0.2;
    double occupancy_hi = 0.9;
    int min_nodes = 2;
    int max_nodes = 40;
    int job_count_min = 0;
    int job_count_max = 0;

    void validate() const {
        if (occupancy_lo < 0.0 || occupancy_hi > 1.0 || occupancy_lo > occupancy_hi)
            throw ConfigError("occupancy range must satisfy 0 <= lo <= hi <= 1");
        if (min_nodes < 2 || min_nodes > max_nodes) throw ConfigError("bad node request range");
        if (job_count_min < 0 || job_count_min > job_count_max)
            throw ConfigError("bad job count range");
    }
};

/// Draw an instance whose greedy sequential construction succeeds, so every
/// solver downstream starts from the same feasible baseline. Jobs come out
/// in waiting-queue priority order.
inline ScasModel draw_instance(const InstanceSpec& spec, Rng& rng) {
    spec.validate();
    FatTree tree(spec.radix, spec.pod_count);
    const auto total = static_cast<std::size_t>(tree.node_count());
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const double f = rng.uniform(spec.occupancy_lo, spec.occupancy_hi);
        const auto busy = std::min(total, static_cast<std::size_t>(f * static_cast<double>(total)));
        auto busy_idx = rng.sample_indices(total, busy);
        std::vector<char> is_busy(total, 0);
        for (std::size_t i : busy_idx) is_busy[i] = 1;
        std::vector<NodeId> idle;
        idle.reserve(total - busy);
        for (std::size_t i = 0; i < total; ++i)
            if (!is_busy[i]) idle.push_back(static_cast<NodeId>(i));
        const auto capacity = static_cast<int>(idle.size());

        std::vector<int> sizes;
        if (spec.job_count_min == 0 && spec.job_count_max == 0) {
            int used = 0;
            while (true) {
                const int n = static_cast<int>(rng.uniform_int(spec.min_nodes, spec.max_nodes));
                if (used + n > capacity) break;
                sizes.push_back(n);
                used += n;
            }
            if (sizes.empty()) continue;
        } else {
            const int count =
                static_cast<int>(rng.uniform_int(spec.job_count_min, spec.job_count_max));
            int used = 0;
            for (int i = 0; i < count; ++i) {
                const int n = static_cast<int>(rng.uniform_int(spec.min_nodes, spec.max_nodes));
                sizes.push_back(n);
                used += n;
            }
            if (used > capacity) continue;
        }

        ScasModel model;
        model.tree = tree;
        model.hop_cost = spec.hop_cost;
        model.idle = IdleSequence(std::move(idle));
        for (std::size_t i = 0; i < sizes.size(); ++i) {
            Job j;
            j.job_id = static_cast<int>(i);
            j.requested_nodes = sizes[i];
            j.processing_time = j.estimated_time = 100.0;
            model.jobs.push_back(j);
        }
        std::sort(model.jobs.begin(), model.jobs.end(), higher_priority);
        try {
            initial_solution(model);
        } catch (const InfeasibleError&) {
            continue;  // greedy fragmented itself into a corner; redraw
        }
        return model;
    }
    throw ConfigError("could not draw a feasible instance in 1000 attempts");
}

}  // namespace hopsched
