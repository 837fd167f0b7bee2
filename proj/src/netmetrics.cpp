#include "cdrscope/netmetrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <functional>
#include <queue>
#include <stdexcept>
#include <thread>

#include "cdrscope/csv.hpp"
#include "cdrscope/rng.hpp"
#include "cdrscope/stats.hpp"
#include "json.hpp"

namespace cdrscope {

namespace {

constexpr double kLog10E = 0.4342944819032518;  // log10(e)

using HeapItem = std::pair<double, NodeId>;
using MinHeap = std::priority_queue<HeapItem, std::vector<HeapItem>, std::greater<HeapItem>>;

// Single-source shortest paths over d = w_avg / w. Distances are valid for
// nodes whose epoch stamp equals `cur`; buffers are reused across sources.
template <typename ForEachOut>
void dijkstra(NodeId src, const ForEachOut& adj, double w_avg, std::vector<double>& dist,
              std::vector<uint32_t>& epoch, uint32_t cur) {
    MinHeap pq;
    dist[src] = 0.0;
    epoch[src] = cur;
    pq.push({0.0, src});
    while (!pq.empty()) {
        auto [d, u] = pq.top();
        pq.pop();
        if (d > dist[u]) continue;
        adj(u, [&](NodeId v, uint32_t w) {
            double nd = d + w_avg / double(w);
            if (epoch[v] != cur || nd < dist[v]) {
                dist[v] = nd;
                epoch[v] = cur;
                pq.push({nd, v});
            }
        });
    }
}

unsigned resolve_threads(unsigned requested) {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    return requested == 0 ? hw : requested;
}

}  // namespace

CentralityResult harmonic_centrality(const WeightedDigraph& g, const CentralityOptions& opt) {
    const size_t n = g.node_count();
    if (n == 0) throw std::invalid_argument("harmonic centrality of an empty graph");

    CentralityResult res;
    res.n = n;
    res.c_h.assign(n, 0.0);
    if (n == 1) return res;

    Components comps = weak_components(g);
    const uint32_t giant = comps.giant;

    auto fwd = [&](NodeId u, auto&& visit) {
        for (const auto* e = g.out_begin(u); e != g.out_end(u); ++e) visit(e->dst, e->weight);
    };
    auto bwd = [&](NodeId u, auto&& visit) {
        for (const auto* e = g.in_begin(u); e != g.in_end(u); ++e) visit(e->dst, e->weight);
    };
    const double w_avg = g.w_avg();

    if (n <= opt.exact_threshold) {
        res.sampled = false;
        res.samples_used = n;
        // per-source partials folded in id order, so the thread count never
        // changes the result
        std::vector<double> path_sum(n, 0.0), path_max(n, 0.0);
        std::vector<uint64_t> path_cnt(n, 0);

        unsigned workers = resolve_threads(opt.threads);
        std::atomic<size_t> next{0};
        auto body = [&]() {
            std::vector<double> dist(n);
            std::vector<uint32_t> epoch(n, 0);
            uint32_t cur = 0;
            for (;;) {
                size_t i = next.fetch_add(1);
                if (i >= n) break;
                ++cur;
                dijkstra(NodeId(i), fwd, w_avg, dist, epoch, cur);
                double inv_sum = 0.0;
                bool in_gc = comps.comp[i] == giant;
                for (size_t v = 0; v < n; ++v) {
                    if (epoch[v] != cur || v == i) continue;
                    inv_sum += 1.0 / dist[v];
                    if (in_gc && comps.comp[v] == giant) {
                        path_sum[i] += dist[v];
                        path_max[i] = std::max(path_max[i], dist[v]);
                        ++path_cnt[i];
                    }
                }
                res.c_h[i] = inv_sum / double(n - 1);
            }
        };
        if (workers <= 1) {
            body();
        } else {
            std::vector<std::thread> pool;
            for (unsigned t = 0; t < workers; ++t) pool.emplace_back(body);
            for (auto& th : pool) th.join();
        }
        double d_sum = 0.0, d_max = 0.0;
        uint64_t d_cnt = 0;
        for (size_t i = 0; i < n; ++i) {
            d_sum += path_sum[i];
            d_cnt += path_cnt[i];
            d_max = std::max(d_max, path_max[i]);
        }
        res.diameter = d_max;
        res.mean_path = d_cnt ? d_sum / double(d_cnt) : 0.0;
    } else {
        // Estimate from sampled targets: reverse-direction shortest paths from
        // each target give one column of the distance matrix, and the per-node
        // score is the mean of 1/l over sampled targets.
        res.sampled = true;
        std::vector<NodeId> ids(n);
        for (size_t i = 0; i < n; ++i) ids[i] = NodeId(i);
        Rng rng = Rng::derive(opt.seed, 0x43454e54u);  // stream key for centrality
        size_t k = std::min(opt.sample_count, n);
        for (size_t i = 0; i < k; ++i) {
            size_t j = i + size_t(rng.bounded(n - i));
            std::swap(ids[i], ids[j]);
        }
        std::vector<NodeId> targets(ids.begin(), ids.begin() + k);
        res.samples_used = k;

        constexpr size_t kSlots = 16;  // fixed so results never depend on threads
        struct Slot {
            std::vector<double> inv_sum;
            double path_sum = 0.0, path_max = 0.0;
            uint64_t path_cnt = 0;
        };
        std::vector<Slot> slots(kSlots);
        for (auto& s : slots) s.inv_sum.assign(n, 0.0);
        unsigned workers = std::min<unsigned>(resolve_threads(opt.threads), kSlots);
        auto body = [&](unsigned worker) {
            std::vector<double> dist(n);
            std::vector<uint32_t> epoch(n, 0);
            uint32_t cur = 0;
            for (size_t s = worker; s < kSlots; s += workers) {
                Slot& slot = slots[s];
                for (size_t j = s; j < targets.size(); j += kSlots) {
                    NodeId t = targets[j];
                    ++cur;
                    dijkstra(t, bwd, w_avg, dist, epoch, cur);
                    bool t_gc = comps.comp[t] == giant;
                    for (size_t v = 0; v < n; ++v) {
                        if (epoch[v] != cur || v == t) continue;
                        slot.inv_sum[v] += 1.0 / dist[v];
                        if (t_gc && comps.comp[v] == giant) {
                            slot.path_sum += dist[v];
                            slot.path_max = std::max(slot.path_max, dist[v]);
                            ++slot.path_cnt;
                        }
                    }
                }
            }
        };
        if (workers <= 1) {
            body(0);
        } else {
            std::vector<std::thread> pool;
            for (unsigned t = 0; t < workers; ++t) pool.emplace_back(body, t);
            for (auto& th : pool) th.join();
        }
        std::vector<double> acc(n, 0.0);
        double d_sum = 0.0, d_max = 0.0;
        uint64_t d_cnt = 0;
        for (const Slot& s : slots) {
            for (size_t v = 0; v < n; ++v) acc[v] += s.inv_sum[v];
            d_sum += s.path_sum;
            d_cnt += s.path_cnt;
            d_max = std::max(d_max, s.path_max);
        }
        // each node's mean runs over the sampled targets other than itself
        std::vector<uint8_t> in_sample(n, 0);
        for (NodeId t : targets) in_sample[t] = 1;
        for (size_t v = 0; v < n; ++v) {
            size_t denom = k - in_sample[v];
            res.c_h[v] = denom ? acc[v] / double(denom) : 0.0;
        }
        res.diameter = d_max;
        res.mean_path = d_cnt ? d_sum / double(d_cnt) : 0.0;
    }

    res.mean = mean_of(res.c_h);
    res.stddev = stddev_of(res.c_h);
    return res;
}

double reciprocated_pair_fraction(const WeightedDigraph& g) {
    if (g.edge_count() == 0)
        throw std::invalid_argument("reciprocated fraction of an edgeless graph");
    uint64_t reciprocated = 0;
    for (NodeId u = 0; u < g.node_count(); ++u) {
        for_each_dyad(g, u, [&](NodeId, uint32_t out_w, uint32_t in_w) {
            if (out_w > 0 && in_w > 0) ++reciprocated;  // counts the u->v edge
        });
    }
    return double(reciprocated) / double(g.edge_count());
}

ReciprocityResult reciprocity(const WeightedDigraph& g, ReciprocityVariant variant,
                              NeighborConvention kconv) {
    ReciprocityResult res;
    res.variant = variant;
    res.r.assign(g.node_count(), std::nan(""));
    for (NodeId u = 0; u < g.node_count(); ++u) {
        double sum = 0.0, den = 0.0;
        uint64_t dyads = 0;
        for_each_dyad(g, u, [&](NodeId, uint32_t out_w, uint32_t in_w) {
            ++dyads;
            switch (variant) {
                case ReciprocityVariant::Weighted:
                    sum += (double(out_w) - double(in_w)) / (double(out_w) + double(in_w));
                    break;
                case ReciprocityVariant::Binary:
                    sum += out_w > 0 && in_w == 0 ? 1.0 : in_w > 0 && out_w == 0 ? -1.0 : 0.0;
                    break;
                case ReciprocityVariant::Hyper:
                    sum += double(out_w) - double(in_w);
                    den += double(out_w) + double(in_w);
                    break;
            }
        });
        if (dyads == 0) continue;
        double score;
        if (variant == ReciprocityVariant::Hyper) {
            score = sum / den;
        } else {
            double k = kconv == NeighborConvention::Dyads
                           ? double(dyads)
                           : double(g.out_degree(u) + g.in_degree(u));
            score = sum / k;
        }
        res.r[u] = score;
        res.scored.push_back(u);
        if (score == 1.0 || score == -1.0) ++res.spikes;
    }
    return res;
}

ReciprocityCorrelation reciprocity_metric_correlation(const WeightedDigraph& g,
                                                      bool exclude_spikes) {
    ReciprocityResult w = reciprocity(g, ReciprocityVariant::Weighted);
    ReciprocityResult b = reciprocity(g, ReciprocityVariant::Binary);
    ReciprocityResult h = reciprocity(g, ReciprocityVariant::Hyper);

    std::vector<double> vw, vb, vh;
    for (NodeId u : w.scored) {
        if (exclude_spikes && (w.r[u] == 1.0 || w.r[u] == -1.0)) continue;
        vw.push_back(w.r[u]);
        vb.push_back(b.r[u]);
        vh.push_back(h.r[u]);
    }
    ReciprocityCorrelation res;
    res.nodes_used = vw.size();
    auto corr = [&](const std::vector<double>& x, const std::vector<double>& y,
                    const char* label) {
        try {
            return pearson(x, y);
        } catch (const std::exception& e) {
            res.warnings.push_back(std::string(label) + ": " + e.what());
            return std::nan("");
        }
    };
    res.weighted_binary = corr(vw, vb, "weighted~binary");
    res.weighted_hyper = corr(vw, vh, "weighted~hyper");
    res.binary_hyper = corr(vb, vh, "binary~hyper");
    return res;
}

// ---- distribution fitting ---------------------------------------------

namespace {

struct BinnedDensity {
    std::vector<double> center;    // geometric bin centers, occupied bins only
    std::vector<double> log10_den; // log10 of empirical density
    int bins_used = 0;
};

bool log_bin(const std::vector<double>& samples, int n_bins, BinnedDensity& out,
             std::string& error) {
    std::vector<double> pos;
    for (double s : samples)
        if (std::isfinite(s) && s > 0.0) pos.push_back(s);
    if (pos.size() < 20) throw std::invalid_argument("fit needs at least 20 positive samples");
    auto [mn_it, mx_it] = std::minmax_element(pos.begin(), pos.end());
    double lmin = std::log(*mn_it), lmax = std::log(*mx_it);
    if (!(lmax > lmin)) {
        error = "zero dynamic range in samples";
        return false;
    }
    std::vector<uint64_t> count(n_bins, 0);
    double width = lmax - lmin;
    for (double s : pos) {
        int k = int(double(n_bins) * (std::log(s) - lmin) / width);
        if (k < 0) k = 0;
        if (k >= n_bins) k = n_bins - 1;
        ++count[k];
    }
    double total = double(pos.size());
    for (int k = 0; k < n_bins; ++k) {
        if (count[k] == 0) continue;
        double lo = std::exp(lmin + width * double(k) / n_bins);
        double hi = std::exp(lmin + width * double(k + 1) / n_bins);
        out.center.push_back(std::exp(lmin + width * (double(k) + 0.5) / n_bins));
        out.log10_den.push_back(std::log10(double(count[k]) / (total * (hi - lo))));
        ++out.bins_used;
    }
    return true;
}

// least squares of y on columns {1, x1, x2}; returns false when singular
bool solve_quadratic_ls(const std::vector<double>& x1, const std::vector<double>& x2,
                        const std::vector<double>& y, double coef[3]) {
    double a[3][4] = {};
    size_t n = y.size();
    for (size_t i = 0; i < n; ++i) {
        double row[3] = {1.0, x1[i], x2[i]};
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) a[r][c] += row[r] * row[c];
            a[r][3] += row[r] * y[i];
        }
    }
    for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        if (std::abs(a[piv][col]) < 1e-12) return false;
        std::swap(a[col], a[piv]);
        for (int r = 0; r < 3; ++r) {
            if (r == col) continue;
            double f = a[r][col] / a[col][col];
            for (int c = col; c < 4; ++c) a[r][c] -= f * a[col][c];
        }
    }
    for (int r = 0; r < 3; ++r) coef[r] = a[r][3] / a[r][r];
    return true;
}

struct SimpleLs {
    double intercept, slope, sse;
    bool ok;
};

SimpleLs linear_ls(const std::vector<double>& x, const std::vector<double>& y) {
    size_t n = x.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    double denom = double(n) * sxx - sx * sx;
    if (std::abs(denom) < 1e-300) return {0, 0, 0, false};
    double b = (double(n) * sxy - sx * sy) / denom;
    double a = (sy - b * sx) / double(n);
    double sse = 0;
    for (size_t i = 0; i < n; ++i) {
        double r = y[i] - a - b * x[i];
        sse += r * r;
    }
    return {a, b, sse, true};
}

double r_squared(const std::vector<double>& y, double sse) {
    double mean = 0;
    for (double v : y) mean += v;
    mean /= double(y.size());
    double sst = 0;
    for (double v : y) sst += (v - mean) * (v - mean);
    return sst > 0 ? 1.0 - sse / sst : 0.0;
}

}  // namespace

FitResult fit_distribution(const std::vector<double>& samples, FitFamily family, BinSpec bins) {
    if (bins.n_bins < 4) throw std::invalid_argument("need at least 4 bins");
    FitResult res;
    res.family = family;
    res.n_bins = bins.n_bins;

    BinnedDensity bd;
    if (!log_bin(samples, bins.n_bins, bd, res.error)) return res;
    res.bins_used = bd.bins_used;

    if (family == FitFamily::LogNormal) {
        if (bd.bins_used < 4) {
            res.error = "too few occupied bins for a three-parameter fit";
            return res;
        }
        // log10 P(w) is quadratic in t = ln w:
        //   coefficient of t^2 is -log10(e) / (2 sigma^2)
        //   coefficient of t    is  log10(e) (mu / sigma^2 - 1)
        std::vector<double> t(bd.center.size()), t2(bd.center.size());
        for (size_t i = 0; i < bd.center.size(); ++i) {
            t[i] = std::log(bd.center[i]);
            t2[i] = t[i] * t[i];
        }
        double coef[3];
        if (!solve_quadratic_ls(t, t2, bd.log10_den, coef)) {
            res.error = "singular normal equations";
            return res;
        }
        if (coef[2] >= 0.0) {
            res.error = "binned density is not log-concave in ln w";
            return res;
        }
        double sigma2 = -kLog10E / (2.0 * coef[2]);
        res.sigma = std::sqrt(sigma2);
        res.mu = sigma2 * (coef[1] / kLog10E + 1.0);
        double sse = 0;
        for (size_t i = 0; i < t.size(); ++i) {
            double pred = coef[0] + coef[1] * t[i] + coef[2] * t2[i];
            double r = bd.log10_den[i] - pred;
            sse += r * r;
        }
        res.r2 = r_squared(bd.log10_den, sse);
        res.ok = true;
        return res;
    }

    // stretched exponential: log10 P = A - B w^beta with B = log10(e)/alpha
    if (bd.bins_used < 3) {
        res.error = "too few occupied bins for a two-parameter fit";
        return res;
    }
    auto sse_at = [&](double beta) {
        std::vector<double> x(bd.center.size());
        for (size_t i = 0; i < x.size(); ++i) x[i] = std::pow(bd.center[i], beta);
        SimpleLs ls = linear_ls(x, bd.log10_den);
        return ls.ok ? ls.sse : 1e300;
    };
    // coarse scan then golden-section refinement inside the best bracket
    const double kBetaLo = 0.02, kBetaHi = 3.0;
    const int kGrid = 80;
    int best = 0;
    double best_sse = 1e300;
    std::vector<double> grid(kGrid);
    for (int i = 0; i < kGrid; ++i) {
        grid[i] = kBetaLo * std::pow(kBetaHi / kBetaLo, double(i) / (kGrid - 1));
        double s = sse_at(grid[i]);
        if (s < best_sse) {
            best_sse = s;
            best = i;
        }
    }
    double lo = grid[std::max(0, best - 1)], hi = grid[std::min(kGrid - 1, best + 1)];
    const double kGold = 0.6180339887498949;
    double a = lo, b = hi;
    double x1 = b - kGold * (b - a), x2 = a + kGold * (b - a);
    double f1 = sse_at(x1), f2 = sse_at(x2);
    for (int it = 0; it < 70; ++it) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - kGold * (b - a);
            f1 = sse_at(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + kGold * (b - a);
            f2 = sse_at(x2);
        }
    }
    double beta = f1 < f2 ? x1 : x2;
    std::vector<double> x(bd.center.size());
    for (size_t i = 0; i < x.size(); ++i) x[i] = std::pow(bd.center[i], beta);
    SimpleLs ls = linear_ls(x, bd.log10_den);
    if (!ls.ok) {
        res.error = "profile search ended in a singular system";
        return res;
    }
    if (ls.slope >= 0.0) {
        res.error = "density does not decay in w^beta; residual sse=" + std::to_string(ls.sse);
        return res;
    }
    res.beta = beta;
    res.alpha = kLog10E / (-ls.slope);
    res.r2 = r_squared(bd.log10_den, ls.sse);
    res.ok = true;
    return res;
}

void write_node_metrics_csv(const std::string& path, const Dataset& ds,
                            const CentralityResult& cent,
                            const std::vector<ReciprocityResult>& recips) {
    CsvWriter w(path);
    w.raw_line("user_id,metric,value");
    char buf[32];
    auto fmt = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.10g", v);
        return std::string(buf);
    };
    auto variant_name = [](ReciprocityVariant v) {
        switch (v) {
            case ReciprocityVariant::Weighted: return "reciprocity_weighted";
            case ReciprocityVariant::Binary: return "reciprocity_binary";
            case ReciprocityVariant::Hyper: return "reciprocity_hyper";
        }
        return "?";
    };
    for (NodeId u = 0; u < cent.c_h.size(); ++u)
        w.row({ds.user_names.name(u), "harmonic_centrality", fmt(cent.c_h[u])});
    for (const auto& rec : recips)
        for (NodeId u : rec.scored)
            w.row({ds.user_names.name(u), variant_name(rec.variant), fmt(rec.r[u])});
}

std::string fit_result_json(const FitResult& fit) {
    nlohmann::json j;
    j["family"] = fit.family == FitFamily::LogNormal ? "log_normal" : "stretched_exp";
    j["ok"] = fit.ok;
    if (fit.family == FitFamily::LogNormal) {
        j["mu"] = fit.mu;
        j["sigma"] = fit.sigma;
    } else {
        j["alpha"] = fit.alpha;
        j["beta"] = fit.beta;
    }
    j["r2"] = fit.r2;
    j["n_bins"] = fit.n_bins;
    j["bins_used"] = fit.bins_used;
    if (!fit.ok) j["error"] = fit.error;
    return j.dump(2);
}

}  // namespace cdrscope
