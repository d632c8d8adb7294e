#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hopsched {

using NodeId = std::int32_t;

/// Pruned k-ary fat-tree. A full tree with radix k has k pods of (k/2)^2
/// nodes each; pruning keeps only the first pod_count pods. Node ids run
/// left to right, so switch and pod membership are pure arithmetic on the
/// id and no graph object is needed.
class FatTree {
public:
    /// A one-node tree (radix 2, one pod).
    FatTree() : FatTree(2, 1) {}

    FatTree(int radix, int pod_count) : radix_(radix), pod_count_(pod_count) {
        if (radix < 2 || radix % 2 != 0)
            throw std::domain_error("fat-tree radix must be even and >= 2");
        if (pod_count < 1 || pod_count > radix)
            throw std::domain_error("pod count must be in [1, radix]");
        node_count_ = pod_count * nodes_per_pod();
    }

    int radix() const { return radix_; }
    int pod_count() const { return pod_count_; }
    int node_count() const { return node_count_; }
    int nodes_per_switch() const { return radix_ / 2; }
    int nodes_per_pod() const { return (radix_ / 2) * (radix_ / 2); }
    /// Level-0 (leaf) switches across all retained pods.
    int switch_count() const { return pod_count_ * (radix_ / 2); }

    bool contains(NodeId id) const { return id >= 0 && id < node_count_; }

    int switch_of(NodeId id) const {
        check(id);
        return id / nodes_per_switch();
    }

    int pod_of(NodeId id) const {
        check(id);
        return id / nodes_per_pod();
    }

private:
    void check(NodeId id) const {
        if (!contains(id))
            throw std::domain_error("node id " + std::to_string(id) + " outside [0, " +
                                    std::to_string(node_count_) + ")");
    }

    int radix_;
    int pod_count_;
    int node_count_;
};

/// Communication hops between two distinct nodes: 2 under one leaf switch,
/// 4 within one pod, 6 across pods.
inline int hops(const FatTree& tree, NodeId a, NodeId b) {
    if (!tree.contains(a) || !tree.contains(b))
        throw std::domain_error("hop query outside the tree");
    if (a == b) throw std::domain_error("hop count undefined for a node and itself");
    if (tree.switch_of(a) == tree.switch_of(b)) return 2;
    if (tree.pod_of(a) == tree.pod_of(b)) return 4;
    return 6;
}

/// Sum of hop counts over all ordered pairs of distinct nodes. Exact in
/// 64-bit integers; duplicates in the input surface as a domain error via
/// the self-hop check.
inline std::int64_t pair_hop_sum(const FatTree& tree, std::span<const NodeId> nodes) {
    std::int64_t sum = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i)
        for (std::size_t j = i + 1; j < nodes.size(); ++j)
            sum += 2 * hops(tree, nodes[i], nodes[j]);
    return sum;
}

/// Per-job interference cost: (1/n) * sum over ordered pairs of c * hops.
inline double ch_cost(const FatTree& tree, std::span<const NodeId> nodes, double hop_cost) {
    if (nodes.size() < 2) throw std::domain_error("ch_cost needs at least two nodes");
    return hop_cost * static_cast<double>(pair_hop_sum(tree, nodes)) /
           static_cast<double>(nodes.size());
}

inline double ch_cost(const FatTree& tree, const std::vector<NodeId>& nodes, double hop_cost) {
    return ch_cost(tree, std::span<const NodeId>(nodes), hop_cost);
}

}  // namespace hopsched
