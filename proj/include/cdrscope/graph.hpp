#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cdrscope/dataset.hpp"

namespace cdrscope {

// Directed communication-count graph. Immutable after construction; nodes
// are the dataset's dense user ids (internal users followed by external
// contacts). Adjacency is CSR with neighbors sorted by destination.
class WeightedDigraph {
public:
    struct Edge {
        NodeId dst;
        uint32_t weight;
    };

    WeightedDigraph() = default;
    WeightedDigraph(size_t n_nodes, std::vector<std::pair<uint64_t, uint32_t>> packed_edges);

    size_t node_count() const { return n_; }
    size_t edge_count() const { return edges_.size(); }
    uint64_t total_weight() const { return total_weight_; }
    double w_avg() const { return w_avg_; }

    const Edge* out_begin(NodeId u) const { return edges_.data() + out_offsets_[u]; }
    const Edge* out_end(NodeId u) const { return edges_.data() + out_offsets_[u + 1]; }
    const Edge* in_begin(NodeId u) const { return in_edges_.data() + in_offsets_[u]; }
    const Edge* in_end(NodeId u) const { return in_edges_.data() + in_offsets_[u + 1]; }
    size_t out_degree(NodeId u) const { return out_offsets_[u + 1] - out_offsets_[u]; }
    size_t in_degree(NodeId u) const { return in_offsets_[u + 1] - in_offsets_[u]; }

    // 0 when the edge does not exist.
    uint32_t weight(NodeId src, NodeId dst) const;

    // Distinct neighbors over in- and out-edges (dyad count).
    std::vector<NodeId> neighbors(NodeId u) const;

    // Flat edge list in (src, dst) order.
    struct FullEdge {
        NodeId src, dst;
        uint32_t weight;
    };
    std::vector<FullEdge> edge_list() const;

private:
    size_t n_ = 0;
    std::vector<uint64_t> out_offsets_, in_offsets_;
    std::vector<Edge> edges_, in_edges_;
    uint64_t total_weight_ = 0;
    double w_avg_ = 0.0;
};

// Visits each dyad of u once, in ascending neighbor order, with both
// directed weights (0 when that direction is absent).
template <typename F>
void for_each_dyad(const WeightedDigraph& g, NodeId u, const F& f) {
    const auto* a = g.out_begin(u);
    const auto* ae = g.out_end(u);
    const auto* b = g.in_begin(u);
    const auto* be = g.in_end(u);
    while (a != ae || b != be) {
        if (b == be || (a != ae && a->dst < b->dst)) {
            f(a->dst, a->weight, 0u);
            ++a;
        } else if (a == ae || b->dst < a->dst) {
            f(b->dst, 0u, b->weight);
            ++b;
        } else {
            f(a->dst, a->weight, b->weight);
            ++a;
            ++b;
        }
    }
}

// w_ij = number of events with caller i and callee j; calls and messages
// both count one.
WeightedDigraph build_weighted(const Dataset& ds);
WeightedDigraph graph_from_edges(size_t n_nodes, const std::vector<WeightedDigraph::FullEdge>& edges);

// Edge distances d_ij = w_avg / w_ij; heavier edges are shorter.
struct DistanceView {
    const WeightedDigraph& graph;
    double distance(uint32_t weight) const { return graph.w_avg() / double(weight); }
};

// Unweighted graph retaining edges with w_ij >= c.
struct CutoffGraph {
    size_t n = 0;
    std::vector<uint64_t> offsets;
    std::vector<NodeId> targets;
    size_t edge_count() const { return targets.size(); }
};
CutoffGraph apply_cutoff(const WeightedDigraph& g, uint32_t c);

// Weakly connected components over the undirected projection.
struct Components {
    std::vector<uint32_t> comp;   // per node
    std::vector<uint64_t> sizes;  // per component
    uint32_t giant = 0;           // index of the largest component
};
Components weak_components(const WeightedDigraph& g);
Components weak_components(const CutoffGraph& g);

struct SweepRecord {
    uint32_t cutoff;
    double gc_fraction;
    uint64_t edges;
    double isolated_fraction_outside_gc;  // NaN when everything is in the GC
};

struct CurveFit {
    bool ok = false;
    double param = 0.0;   // lambda for the exponential, gamma for the power law
    double scale = 0.0;
    double r2 = 0.0;
    std::string error;
};

struct CutoffSweepResult {
    std::vector<SweepRecord> records;
    CurveFit gc_exponential;   // gc_fraction ~ exp(-lambda * c)
    CurveFit edge_power_law;   // edges ~ c^(-gamma)
};

CutoffSweepResult cutoff_sweep(const WeightedDigraph& g, uint32_t c_max);

// Degree-preserving randomization: destination endpoints are swapped in
// pairs, rejecting self-loops and parallel edges. Weights travel with the
// source stub, so out-degree, per-edge out-strength, and in-degree counts
// are all preserved exactly.
struct RewireResult {
    WeightedDigraph graph;
    uint64_t swaps_done = 0;
    uint64_t swaps_attempted = 0;
    bool no_swap_possible = false;
};
RewireResult rewire_random(const WeightedDigraph& g, uint64_t seed,
                           uint64_t attempts_per_edge = 10);

enum class DegreeDirection { Out, In };

struct DegreeDistribution {
    std::vector<std::pair<uint32_t, uint64_t>> histogram;  // (degree, node count), degree > 0
    uint64_t zero_degree_nodes = 0;
    std::optional<double> tail_exponent;  // discrete MLE with fixed x_min
    uint64_t tail_points = 0;
};

// Discrete power-law tail estimate alpha = 1 + n / sum(ln(k_i / (x_min - 0.5)))
// over degrees >= x_min; unavailable with fewer than 10 tail samples.
DegreeDistribution degree_distribution(const WeightedDigraph& g, DegreeDirection dir,
                                       uint32_t x_min);
DegreeDistribution degree_distribution(const CutoffGraph& g, DegreeDirection dir, uint32_t x_min);

void write_edge_list_csv(const WeightedDigraph& g, const Dataset& ds, const std::string& path);

}  // namespace cdrscope
