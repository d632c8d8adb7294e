#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "hopsched/errors.hpp"
#include "hopsched/topology.hpp"

namespace hopsched {

/// The ordered sequence of idle node ids. Constructed strictly increasing;
/// window removal and sorted re-insertion both preserve that order, so
/// position lookups can use binary search. Values are immutable — updates
/// return new sequences.
class IdleSequence {
public:
    IdleSequence() = default;

    explicit IdleSequence(std::vector<NodeId> nodes) : nodes_(std::move(nodes)) {
        for (std::size_t i = 1; i < nodes_.size(); ++i)
            if (nodes_[i - 1] >= nodes_[i])
                throw std::domain_error("idle sequence must be strictly increasing");
    }

    static IdleSequence all_nodes(const FatTree& tree) {
        std::vector<NodeId> v(static_cast<std::size_t>(tree.node_count()));
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<NodeId>(i);
        return IdleSequence(std::move(v));
    }

    std::size_t size() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }
    NodeId at(std::size_t pos) const { return nodes_.at(pos); }
    const std::vector<NodeId>& nodes() const { return nodes_; }

    std::optional<std::size_t> position_of(NodeId id) const {
        auto it = std::lower_bound(nodes_.begin(), nodes_.end(), id);
        if (it == nodes_.end() || *it != id) return std::nullopt;
        return static_cast<std::size_t>(it - nodes_.begin());
    }

    /// The n consecutive entries starting at start_pos, wrapping to the
    /// head when the tail runs out.
    std::vector<NodeId> window(std::size_t start_pos, std::size_t n) const {
        if (n == 0 || n > nodes_.size())
            throw CapacityError("window of length " + std::to_string(n) + " on sequence of " +
                                std::to_string(nodes_.size()));
        if (start_pos >= nodes_.size()) throw CapacityError("window start beyond sequence end");
        std::vector<NodeId> out(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = nodes_[(start_pos + i) % nodes_.size()];
        return out;
    }

    /// Sequence with the wrap-around window removed; survivor order kept.
    IdleSequence erased(std::size_t start_pos, std::size_t n) const {
        if (n > nodes_.size()) throw CapacityError("cannot erase more entries than present");
        if (n == 0) return *this;
        IdleSequence out;
        out.nodes_.reserve(nodes_.size() - n);
        const std::size_t m = nodes_.size();
        for (std::size_t i = 0; i < m; ++i) {
            const bool in_window = ((i + m - start_pos % m) % m) < n;
            if (!in_window) out.nodes_.push_back(nodes_[i]);
        }
        return out;
    }

    /// Merge the given ids back in at their identifier-sorted positions.
    IdleSequence inserted(std::span<const NodeId> ids) const {
        std::vector<NodeId> add(ids.begin(), ids.end());
        std::sort(add.begin(), add.end());
        IdleSequence out;
        out.nodes_.resize(nodes_.size() + add.size());
        std::merge(nodes_.begin(), nodes_.end(), add.begin(), add.end(), out.nodes_.begin());
        for (std::size_t i = 1; i < out.nodes_.size(); ++i)
            if (out.nodes_[i - 1] >= out.nodes_[i])
                throw std::domain_error("insertion would duplicate an idle node");
        return out;
    }

private:
    std::vector<NodeId> nodes_;
};

/// A contiguous wrap-around slice of an idle sequence.
struct Window {
    std::size_t start_pos = 0;
    std::size_t length = 0;
};

inline std::vector<NodeId> window_nodes(const IdleSequence& q, Window w) {
    return q.window(w.start_pos, w.length);
}

/// CH cost of the wrap-around window of n nodes starting at start_pos.
inline double window_cost(const FatTree& tree, const IdleSequence& q, std::size_t start_pos,
                          std::size_t n, double hop_cost) {
    if (n < 2) throw std::domain_error("window cost needs at least two nodes");
    const auto w = q.window(start_pos, n);
    return hop_cost * static_cast<double>(pair_hop_sum(tree, w)) / static_cast<double>(n);
}

/// Costs of all |Q| wrap-around windows of size n, computed by sliding:
/// moving the window one step exchanges one node, so each step is O(n)
/// instead of O(n^2). Matches window_cost bit for bit (same final
/// c * sum / n arithmetic on an exact integer hop sum).
inline std::vector<double> all_window_costs(const FatTree& tree, const IdleSequence& q,
                                            std::size_t n, double hop_cost) {
    if (n < 2) throw std::domain_error("window cost needs at least two nodes");
    const std::size_t m = q.size();
    if (n > m) throw CapacityError("window larger than sequence");
    std::vector<double> costs(m);
    std::int64_t sum = pair_hop_sum(tree, q.window(0, n));
    costs[0] = hop_cost * static_cast<double>(sum) / static_cast<double>(n);
    for (std::size_t p = 1; p < m; ++p) {
        const NodeId out_node = q.at(p - 1);
        const NodeId in_node = q.at((p - 1 + n) % m);
        // shared nodes between the old and new window
        for (std::size_t i = 0; i < n - 1; ++i) {
            const NodeId shared = q.at((p + i) % m);
            sum -= 2 * hops(tree, out_node, shared);
            sum += 2 * hops(tree, in_node, shared);
        }
        costs[p] = hop_cost * static_cast<double>(sum) / static_cast<double>(n);
    }
    return costs;
}

/// Start positions whose wrap-around window of length n avoids `occupied`.
/// Used under SCAS, where the sequence is not updated between placements
/// and earlier jobs' nodes must be dodged. Empty result when nothing fits.
inline std::vector<std::size_t> scas_feasible_starts(const IdleSequence& q, std::size_t n,
                                                     std::span<const NodeId> occupied) {
    std::vector<std::size_t> starts;
    if (n == 0 || n > q.size()) return starts;
    const std::size_t m = q.size();
    std::unordered_set<NodeId> occ(occupied.begin(), occupied.end());
    // free[i] over 2m entries makes the wrap check a plain run scan
    std::vector<char> free_at(2 * m);
    for (std::size_t i = 0; i < m; ++i)
        free_at[i] = free_at[i + m] = occ.count(q.at(i)) ? 0 : 1;
    // runs[i] = free entries starting at i; fill backwards
    std::vector<std::size_t> runs(2 * m + 1, 0);
    for (std::size_t i = 2 * m; i-- > 0;) runs[i] = free_at[i] ? runs[i + 1] + 1 : 0;
    for (std::size_t p = 0; p < m; ++p)
        if (runs[p] >= n) starts.push_back(p);
    return starts;
}

/// DCAS step: take the window and return the shrunken sequence.
inline std::pair<std::vector<NodeId>, IdleSequence> dcas_allocate(const IdleSequence& q,
                                                                 std::size_t start_pos,
                                                                 std::size_t n) {
    auto taken = q.window(start_pos, n);
    return {std::move(taken), q.erased(start_pos, n)};
}

/// One scheduling window's outcome: node sets per job plus the summed cost.
struct AllocationPlan {
    std::map<int, std::vector<NodeId>> assignments;  // job_id -> node ids
    double total_cost = 0.0;
};

/// Recompute the plan objective from scratch, validating disjointness and
/// membership on the way. Jobs of one node contribute zero.
inline double plan_cost(const FatTree& tree, const AllocationPlan& plan, double hop_cost) {
    std::unordered_set<NodeId> seen;
    double total = 0.0;
    for (const auto& [job_id, nodes] : plan.assignments) {
        for (NodeId id : nodes) {
            if (!tree.contains(id))
                throw std::domain_error("plan assigns node outside the tree");
            if (!seen.insert(id).second)
                throw ContractViolation("plan assigns node " + std::to_string(id) + " twice");
        }
        if (nodes.size() >= 2) total += ch_cost(tree, nodes, hop_cost);
    }
    return total;
}

}  // namespace hopsched
