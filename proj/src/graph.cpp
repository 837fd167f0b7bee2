#include "cdrscope/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "cdrscope/csv.hpp"
#include "cdrscope/rng.hpp"

namespace cdrscope {

namespace {
uint64_t pack(NodeId src, NodeId dst) { return (uint64_t(src) << 32) | dst; }
}

WeightedDigraph::WeightedDigraph(size_t n_nodes,
                                 std::vector<std::pair<uint64_t, uint32_t>> packed) {
    n_ = n_nodes;
    std::sort(packed.begin(), packed.end());
    out_offsets_.assign(n_ + 1, 0);
    in_offsets_.assign(n_ + 1, 0);
    edges_.resize(packed.size());
    for (size_t i = 0; i < packed.size(); ++i) {
        NodeId src = static_cast<NodeId>(packed[i].first >> 32);
        NodeId dst = static_cast<NodeId>(packed[i].first & 0xffffffffu);
        if (src == dst) throw std::invalid_argument("self-loop in edge set");
        if (packed[i].second == 0) throw std::invalid_argument("zero-weight edge");
        if (i > 0 && packed[i].first == packed[i - 1].first)
            throw std::invalid_argument("duplicate edge in edge set");
        edges_[i] = {dst, packed[i].second};
        ++out_offsets_[src + 1];
        ++in_offsets_[dst + 1];
        total_weight_ += packed[i].second;
    }
    for (size_t i = 0; i < n_; ++i) out_offsets_[i + 1] += out_offsets_[i];
    for (size_t i = 0; i < n_; ++i) in_offsets_[i + 1] += in_offsets_[i];
    // reverse adjacency, sorted by source within each destination bucket
    in_edges_.resize(packed.size());
    std::vector<uint64_t> cursor(in_offsets_.begin(), in_offsets_.end() - 1);
    for (size_t i = 0; i < packed.size(); ++i) {
        NodeId src = static_cast<NodeId>(packed[i].first >> 32);
        NodeId dst = static_cast<NodeId>(packed[i].first & 0xffffffffu);
        in_edges_[cursor[dst]++] = {src, packed[i].second};
    }
    w_avg_ = edges_.empty() ? 0.0 : double(total_weight_) / double(edges_.size());
}

uint32_t WeightedDigraph::weight(NodeId src, NodeId dst) const {
    const Edge* lo = out_begin(src);
    const Edge* hi = out_end(src);
    auto it = std::lower_bound(lo, hi, dst,
                               [](const Edge& e, NodeId d) { return e.dst < d; });
    return (it != hi && it->dst == dst) ? it->weight : 0;
}

std::vector<NodeId> WeightedDigraph::neighbors(NodeId u) const {
    std::vector<NodeId> nb;
    nb.reserve(out_degree(u) + in_degree(u));
    const Edge* a = out_begin(u);
    const Edge* ae = out_end(u);
    const Edge* b = in_begin(u);
    const Edge* be = in_end(u);
    while (a != ae || b != be) {  // merge of two sorted id streams
        if (b == be || (a != ae && a->dst < b->dst)) {
            if (nb.empty() || nb.back() != a->dst) nb.push_back(a->dst);
            ++a;
        } else {
            if (nb.empty() || nb.back() != b->dst) nb.push_back(b->dst);
            ++b;
        }
    }
    return nb;
}

std::vector<WeightedDigraph::FullEdge> WeightedDigraph::edge_list() const {
    std::vector<FullEdge> out;
    out.reserve(edges_.size());
    for (NodeId u = 0; u < n_; ++u)
        for (const Edge* e = out_begin(u); e != out_end(u); ++e)
            out.push_back({u, e->dst, e->weight});
    return out;
}

WeightedDigraph build_weighted(const Dataset& ds) {
    std::vector<std::pair<uint64_t, uint32_t>> packed;
    packed.reserve(ds.events.size());
    for (const CdrEvent& e : ds.events) packed.emplace_back(pack(e.caller, e.callee), 1u);
    std::sort(packed.begin(), packed.end());
    // run-length collapse into counts
    size_t out = 0;
    for (size_t i = 0; i < packed.size();) {
        size_t j = i;
        uint32_t c = 0;
        while (j < packed.size() && packed[j].first == packed[i].first) {
            ++c;
            ++j;
        }
        packed[out++] = {packed[i].first, c};
        i = j;
    }
    packed.resize(out);
    return WeightedDigraph(ds.node_count(), std::move(packed));
}

WeightedDigraph graph_from_edges(size_t n_nodes,
                                 const std::vector<WeightedDigraph::FullEdge>& edges) {
    std::vector<std::pair<uint64_t, uint32_t>> packed;
    packed.reserve(edges.size());
    for (const auto& e : edges) packed.emplace_back(pack(e.src, e.dst), e.weight);
    return WeightedDigraph(n_nodes, std::move(packed));
}

CutoffGraph apply_cutoff(const WeightedDigraph& g, uint32_t c) {
    CutoffGraph out;
    out.n = g.node_count();
    out.offsets.assign(out.n + 1, 0);
    for (NodeId u = 0; u < out.n; ++u) {
        for (const auto* e = g.out_begin(u); e != g.out_end(u); ++e)
            if (e->weight >= c) ++out.offsets[u + 1];
    }
    for (size_t i = 0; i < out.n; ++i) out.offsets[i + 1] += out.offsets[i];
    out.targets.resize(out.offsets[out.n]);
    std::vector<uint64_t> cursor(out.offsets.begin(), out.offsets.end() - 1);
    for (NodeId u = 0; u < out.n; ++u)
        for (const auto* e = g.out_begin(u); e != g.out_end(u); ++e)
            if (e->weight >= c) out.targets[cursor[u]++] = e->dst;
    return out;
}

namespace {

// BFS over an undirected projection given by a neighbor callback.
template <typename ForEachNeighbor>
Components components_impl(size_t n, ForEachNeighbor&& for_each) {
    Components res;
    res.comp.assign(n, 0xffffffffu);
    std::vector<NodeId> queue;
    for (NodeId s = 0; s < n; ++s) {
        if (res.comp[s] != 0xffffffffu) continue;
        uint32_t c = static_cast<uint32_t>(res.sizes.size());
        res.sizes.push_back(0);
        queue.clear();
        queue.push_back(s);
        res.comp[s] = c;
        while (!queue.empty()) {
            NodeId u = queue.back();
            queue.pop_back();
            ++res.sizes[c];
            for_each(u, [&](NodeId v) {
                if (res.comp[v] == 0xffffffffu) {
                    res.comp[v] = c;
                    queue.push_back(v);
                }
            });
        }
    }
    for (uint32_t c = 0; c < res.sizes.size(); ++c)
        if (res.sizes[c] > res.sizes[res.giant]) res.giant = c;
    return res;
}

}  // namespace

Components weak_components(const WeightedDigraph& g) {
    return components_impl(g.node_count(), [&](NodeId u, auto&& visit) {
        for (const auto* e = g.out_begin(u); e != g.out_end(u); ++e) visit(e->dst);
        for (const auto* e = g.in_begin(u); e != g.in_end(u); ++e) visit(e->dst);
    });
}

Components weak_components(const CutoffGraph& g) {
    // reverse adjacency built once so BFS sees the undirected projection
    std::vector<uint64_t> rev_off(g.n + 1, 0);
    for (NodeId t : g.targets) ++rev_off[t + 1];
    for (size_t i = 0; i < g.n; ++i) rev_off[i + 1] += rev_off[i];
    std::vector<NodeId> rev(g.targets.size());
    std::vector<uint64_t> cursor(rev_off.begin(), rev_off.end() - 1);
    for (NodeId u = 0; u < g.n; ++u)
        for (uint64_t i = g.offsets[u]; i < g.offsets[u + 1]; ++i)
            rev[cursor[g.targets[i]]++] = u;
    return components_impl(g.n, [&](NodeId u, auto&& visit) {
        for (uint64_t i = g.offsets[u]; i < g.offsets[u + 1]; ++i) visit(g.targets[i]);
        for (uint64_t i = rev_off[u]; i < rev_off[u + 1]; ++i) visit(rev[i]);
    });
}

namespace {

// Least squares of y on {1, x}; returns (intercept, slope, r2).
struct LinFit {
    double a, b, r2;
    bool ok;
};

LinFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
    size_t n = x.size();
    if (n < 3) return {0, 0, 0, false};
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    double denom = double(n) * sxx - sx * sx;
    if (std::abs(denom) < 1e-12) return {0, 0, 0, false};
    double b = (double(n) * sxy - sx * sy) / denom;
    double a = (sy - b * sx) / double(n);
    double ss_res = 0, ss_tot = 0, ybar = sy / double(n);
    for (size_t i = 0; i < n; ++i) {
        double r = y[i] - (a + b * x[i]);
        ss_res += r * r;
        ss_tot += (y[i] - ybar) * (y[i] - ybar);
    }
    double r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
    return {a, b, r2, true};
}

}  // namespace

CutoffSweepResult cutoff_sweep(const WeightedDigraph& g, uint32_t c_max) {
    if (c_max < 2) throw std::invalid_argument("cutoff_sweep requires c_max >= 2");
    if (g.node_count() == 0) throw std::invalid_argument("cutoff_sweep on empty graph");
    CutoffSweepResult res;
    const size_t n = g.node_count();
    for (uint32_t c = 1; c <= c_max; ++c) {
        CutoffGraph cg = apply_cutoff(g, c);
        Components comps = weak_components(cg);
        SweepRecord rec;
        rec.cutoff = c;
        rec.edges = cg.edge_count();
        rec.gc_fraction = n ? double(comps.sizes[comps.giant]) / double(n) : 0.0;
        uint64_t outside = n - comps.sizes[comps.giant];
        if (outside == 0) {
            rec.isolated_fraction_outside_gc = std::nan("");
        } else {
            uint64_t isolated = 0;
            // isolated = no incident retained edge in either direction
            std::vector<uint8_t> touched(n, 0);
            for (NodeId u = 0; u < n; ++u) {
                if (cg.offsets[u + 1] > cg.offsets[u]) touched[u] = 1;
            }
            for (NodeId t : cg.targets) touched[t] = 1;
            for (NodeId u = 0; u < n; ++u)
                if (comps.comp[u] != comps.giant && !touched[u]) ++isolated;
            rec.isolated_fraction_outside_gc = double(isolated) / double(outside);
        }
        res.records.push_back(rec);
    }

    // exponential fit of the GC fraction: ln(f) = ln A - lambda c
    {
        std::vector<double> xs, ys;
        for (const auto& r : res.records)
            if (r.gc_fraction > 0) {
                xs.push_back(double(r.cutoff));
                ys.push_back(std::log(r.gc_fraction));
            }
        LinFit f = linear_fit(xs, ys);
        if (f.ok) {
            res.gc_exponential.ok = true;
            res.gc_exponential.param = -f.b;
            res.gc_exponential.scale = std::exp(f.a);
            res.gc_exponential.r2 = f.r2;
        } else {
            res.gc_exponential.error = "too few positive giant-component points";
        }
    }
    // power-law fit of edge count: ln(E) = ln B - gamma ln c
    {
        std::vector<double> xs, ys;
        for (const auto& r : res.records)
            if (r.edges > 0) {
                xs.push_back(std::log(double(r.cutoff)));
                ys.push_back(std::log(double(r.edges)));
            }
        LinFit f = linear_fit(xs, ys);
        if (f.ok) {
            res.edge_power_law.ok = true;
            res.edge_power_law.param = -f.b;
            res.edge_power_law.scale = std::exp(f.a);
            res.edge_power_law.r2 = f.r2;
        } else {
            res.edge_power_law.error = "too few nonzero edge-count points";
        }
    }
    return res;
}

RewireResult rewire_random(const WeightedDigraph& g, uint64_t seed,
                           uint64_t attempts_per_edge) {
    auto edges = g.edge_list();
    RewireResult res;
    if (edges.size() < 2) {
        res.graph = g;
        res.no_swap_possible = true;
        return res;
    }
    std::unordered_set<uint64_t> present;
    present.reserve(edges.size() * 2);
    for (const auto& e : edges) present.insert(pack(e.src, e.dst));

    Rng rng = Rng::derive(seed, 0x52455749u);  // stream key for rewiring
    const uint64_t attempts = attempts_per_edge * edges.size();
    for (uint64_t a = 0; a < attempts; ++a) {
        ++res.swaps_attempted;
        size_t i = static_cast<size_t>(rng.bounded(edges.size()));
        size_t j = static_cast<size_t>(rng.bounded(edges.size()));
        if (i == j) continue;
        auto& e1 = edges[i];
        auto& e2 = edges[j];
        if (e1.dst == e2.dst) continue;  // swap would be a no-op
        if (e1.src == e2.dst || e2.src == e1.dst) continue;  // self-loop
        uint64_t k1 = pack(e1.src, e2.dst);
        uint64_t k2 = pack(e2.src, e1.dst);
        if (present.count(k1) || present.count(k2)) continue;  // parallel edge
        present.erase(pack(e1.src, e1.dst));
        present.erase(pack(e2.src, e2.dst));
        std::swap(e1.dst, e2.dst);
        present.insert(k1);
        present.insert(k2);
        ++res.swaps_done;
    }
    res.no_swap_possible = res.swaps_done == 0;
    res.graph = graph_from_edges(g.node_count(), edges);
    return res;
}

namespace {

DegreeDistribution degree_dist_from(const std::vector<uint32_t>& deg, uint32_t x_min) {
    DegreeDistribution res;
    std::vector<uint32_t> nonzero;
    for (uint32_t d : deg)
        if (d > 0)
            nonzero.push_back(d);
        else
            ++res.zero_degree_nodes;
    std::sort(nonzero.begin(), nonzero.end());
    for (size_t i = 0; i < nonzero.size();) {
        size_t j = i;
        while (j < nonzero.size() && nonzero[j] == nonzero[i]) ++j;
        res.histogram.emplace_back(nonzero[i], j - i);
        i = j;
    }
    if (x_min < 1) x_min = 1;
    double log_sum = 0.0;
    uint64_t n_tail = 0;
    for (uint32_t d : nonzero) {
        if (d >= x_min) {
            log_sum += std::log(double(d) / (double(x_min) - 0.5));
            ++n_tail;
        }
    }
    res.tail_points = n_tail;
    if (n_tail >= 10 && log_sum > 0)
        res.tail_exponent = 1.0 + double(n_tail) / log_sum;
    return res;
}

}  // namespace

DegreeDistribution degree_distribution(const WeightedDigraph& g, DegreeDirection dir,
                                       uint32_t x_min) {
    std::vector<uint32_t> deg(g.node_count());
    for (NodeId u = 0; u < g.node_count(); ++u)
        deg[u] = static_cast<uint32_t>(dir == DegreeDirection::Out ? g.out_degree(u)
                                                                   : g.in_degree(u));
    return degree_dist_from(deg, x_min);
}

DegreeDistribution degree_distribution(const CutoffGraph& g, DegreeDirection dir,
                                       uint32_t x_min) {
    std::vector<uint32_t> deg(g.n, 0);
    if (dir == DegreeDirection::Out) {
        for (NodeId u = 0; u < g.n; ++u)
            deg[u] = static_cast<uint32_t>(g.offsets[u + 1] - g.offsets[u]);
    } else {
        for (NodeId t : g.targets) ++deg[t];
    }
    return degree_dist_from(deg, x_min);
}

void write_edge_list_csv(const WeightedDigraph& g, const Dataset& ds, const std::string& path) {
    CsvWriter w(path);
    w.raw_line("src,dst,weight");
    for (NodeId u = 0; u < g.node_count(); ++u)
        for (const auto* e = g.out_begin(u); e != g.out_end(u); ++e)
            w.row({ds.user_names.name(u), ds.user_names.name(e->dst), std::to_string(e->weight)});
}

}  // namespace cdrscope
