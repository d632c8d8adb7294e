#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "hopsched/errors.hpp"
#include "hopsched/io_util.hpp"
#include "hopsched/rng.hpp"

namespace hopsched {

/// A batch job. processing_time is the true duration; estimated_time is
/// what the submitter claimed and is all the backfilling logic may see.
struct Job {
    int job_id = 0;
    int requested_nodes = 0;
    double processing_time = 0.0;
    double estimated_time = 0.0;
    double arrival_time = 0.0;
    int nwp = 0;  // completed waiting periods while queued
};

enum class ArrivalModel {
    kPoisson,  // exponential inter-arrival gaps with the configured rate
    kFixed,    // constant inter-arrival gap
};

struct WorkloadSpec {
    int job_count = 0;
    int min_nodes = 2;
    int max_nodes = 40;
    double min_time = 10.0;
    double max_time = 1800.0;
    ArrivalModel arrival_model = ArrivalModel::kPoisson;
    double arrival_rate = 1.0;       // jobs per second, Poisson model
    double arrival_interval = 1.0;   // seconds between jobs, fixed model
    double estimate_factor = 1.0;    // estimated_time = processing_time * factor
    std::uint64_t rng_seed = 0;

    void validate() const {
        if (job_count < 0) throw ConfigError("job_count must be nonnegative");
        if (min_nodes < 2) throw ConfigError("min_nodes must be at least 2");
        if (min_nodes > max_nodes) throw ConfigError("node request range is empty");
        if (min_time <= 0.0 || min_time > max_time)
            throw ConfigError("processing time range is empty or nonpositive");
        if (arrival_model == ArrivalModel::kPoisson && arrival_rate <= 0.0)
            throw ConfigError("arrival rate must be positive");
        if (arrival_model == ArrivalModel::kFixed && arrival_interval < 0.0)
            throw ConfigError("arrival interval must be nonnegative");
        if (estimate_factor <= 0.0) throw ConfigError("estimate factor must be positive");
    }
};

/// Draw the whole job stream up front. Arrival times are nondecreasing;
/// everything else is iid uniform over the configured ranges.
inline std::vector<Job> generate_workload(const WorkloadSpec& spec) {
    spec.validate();
    Rng rng(spec.rng_seed);
    std::vector<Job> jobs;
    jobs.reserve(static_cast<std::size_t>(spec.job_count));
    double clock = 0.0;
    for (int i = 0; i < spec.job_count; ++i) {
        Job j;
        j.job_id = i;
        j.requested_nodes = static_cast<int>(rng.uniform_int(spec.min_nodes, spec.max_nodes));
        j.processing_time = rng.uniform(spec.min_time, spec.max_time);
        j.estimated_time = j.processing_time * spec.estimate_factor;
        if (spec.arrival_model == ArrivalModel::kPoisson)
            clock += rng.exponential(spec.arrival_rate);
        else
            clock += spec.arrival_interval;
        j.arrival_time = clock;
        jobs.push_back(j);
    }
    return jobs;
}

/// Higher priority first: more waiting periods, then smaller request, then
/// earlier arrival, then lower id.
inline bool higher_priority(const Job& a, const Job& b) {
    return std::tuple(-a.nwp, a.requested_nodes, a.arrival_time, a.job_id) <
           std::tuple(-b.nwp, b.requested_nodes, b.arrival_time, b.job_id);
}

/// Jobs waiting to be scheduled, kept in priority order.
class WaitingQueue {
public:
    void push(Job j) {
        jobs_.push_back(std::move(j));
        sorted_ = false;
    }

    bool empty() const { return jobs_.empty(); }
    std::size_t size() const { return jobs_.size(); }

    const std::vector<Job>& in_priority_order() {
        ensure_sorted();
        return jobs_;
    }

    /// Greedy scan over the queue: take every job whose request still fits
    /// the unreserved capacity, skip (and defer) the rest. Deferred jobs
    /// accrue one waiting period.
    std::pair<std::vector<Job>, std::vector<Job>> select_window(int idle_count) {
        if (idle_count < 0) throw std::domain_error("idle_count must be nonnegative");
        ensure_sorted();
        std::vector<Job> selected;
        std::vector<Job> deferred;
        int remaining = idle_count;
        for (Job& j : jobs_) {
            if (j.requested_nodes <= remaining) {
                remaining -= j.requested_nodes;
                selected.push_back(j);
            } else {
                j.nwp += 1;
                deferred.push_back(j);
            }
        }
        jobs_ = deferred;
        // deferral bumped nwp, so relative order may have changed
        sorted_ = false;
        return {std::move(selected), std::move(deferred)};
    }

private:
    void ensure_sorted() {
        if (sorted_) return;
        std::stable_sort(jobs_.begin(), jobs_.end(), higher_priority);
        sorted_ = true;
    }

    std::vector<Job> jobs_;
    bool sorted_ = false;
};

/// Replay-file round trip: one CSV row per job.
inline void write_workload_csv(const std::string& path, const std::vector<Job>& jobs) {
    CsvWriter w(path, {"job_id", "arrival", "requested", "processing", "estimated"});
    for (const Job& j : jobs)
        w.row({std::to_string(j.job_id), fmt_double(j.arrival_time),
               std::to_string(j.requested_nodes), fmt_double(j.processing_time),
               fmt_double(j.estimated_time)});
}

inline std::vector<Job> read_workload_csv(const std::string& path) {
    auto lines = read_lines(path);
    if (lines.empty()) throw ConfigError("workload file is empty: " + path);
    if (split_csv(lines[0]) != std::vector<std::string>{"job_id", "arrival", "requested",
                                                        "processing", "estimated"})
        throw ConfigError("unexpected workload header in " + path);
    std::vector<Job> jobs;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        auto f = split_csv(lines[i]);
        if (f.size() != 5) throw ConfigError("bad workload row in " + path);
        Job j;
        j.job_id = static_cast<int>(parse_int(f[0]));
        j.arrival_time = parse_double(f[1]);
        j.requested_nodes = static_cast<int>(parse_int(f[2]));
        j.processing_time = parse_double(f[3]);
        j.estimated_time = parse_double(f[4]);
        jobs.push_back(j);
    }
    return jobs;
}

}  // namespace hopsched
