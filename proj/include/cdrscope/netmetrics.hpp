#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cdrscope/graph.hpp"

namespace cdrscope {

struct CentralityOptions {
    size_t exact_threshold = 50000;  // node count above which sampling kicks in
    size_t sample_count = 2000;      // sampled target nodes in the large regime
    uint64_t seed = 1;
    unsigned threads = 0;  // 0 = hardware concurrency
};

// Harmonic closeness over weighted directed distances d_ij = w_avg / w_ij.
struct CentralityResult {
    std::vector<double> c_h;  // per node; 0 when a node reaches nothing
    double mean = 0.0;
    double stddev = 0.0;
    size_t n = 0;            // node count the normalization uses
    double diameter = 0.0;   // max finite distance between giant-component pairs
    double mean_path = 0.0;  // mean over reachable giant-component pairs
    bool sampled = false;
    size_t samples_used = 0;  // sources (exact) or targets (sampled)
};

CentralityResult harmonic_centrality(const WeightedDigraph& g,
                                     const CentralityOptions& opt = {});

// Fraction of directed edges whose reverse edge also exists.
double reciprocated_pair_fraction(const WeightedDigraph& g);

enum class ReciprocityVariant { Weighted, Binary, Hyper };

// How many links k_i a node is considered to have: distinct neighbors
// (each dyad once) or in-degree plus out-degree (reciprocated dyads twice).
enum class NeighborConvention { Dyads, InPlusOut };

struct ReciprocityResult {
    ReciprocityVariant variant;
    std::vector<double> r;       // per node; NaN for nodes with no incident edge
    std::vector<NodeId> scored;  // nodes that have a score
    uint64_t spikes = 0;         // scored nodes at exactly +1 or -1
};

ReciprocityResult reciprocity(const WeightedDigraph& g, ReciprocityVariant variant,
                              NeighborConvention kconv = NeighborConvention::Dyads);

// Pearson correlations between per-node scores of the three variants.
// Spike nodes (R = +/-1, same set under every variant) can be dropped first.
// Degenerate pairs (zero variance after exclusion) come back as NaN with a
// warning instead of aborting the run.
struct ReciprocityCorrelation {
    double weighted_binary = 0.0;
    double weighted_hyper = 0.0;
    double binary_hyper = 0.0;
    size_t nodes_used = 0;
    std::vector<std::string> warnings;
};

ReciprocityCorrelation reciprocity_metric_correlation(const WeightedDigraph& g,
                                                      bool exclude_spikes);

// ---- distribution fitting ------------------------------------------------

enum class FitFamily { LogNormal, StretchedExp };

struct BinSpec {
    int n_bins = 50;  // logarithmic bins over [min, max] of positive samples
};

// Least squares on log10(density) over occupied bins. The log-normal density
// is exactly quadratic in ln w on that scale, so its fit is closed-form; the
// stretched exponential exp(-w^beta/alpha) is linear once beta is fixed and
// beta is found by a bracketed profile search.
struct FitResult {
    FitFamily family = FitFamily::LogNormal;
    bool ok = false;
    double mu = 0.0, sigma = 0.0;    // log-normal parameters
    double alpha = 0.0, beta = 0.0;  // stretched-exponential parameters
    double r2 = 0.0;                 // in fit space (log10 density)
    int n_bins = 0;
    int bins_used = 0;  // occupied bins entering the fit
    std::string error;  // set when ok is false
};

FitResult fit_distribution(const std::vector<double>& samples, FitFamily family,
                           BinSpec bins = {});

// Long-format per-node dump: user_id,metric,value. NaN scores are skipped.
void write_node_metrics_csv(const std::string& path, const Dataset& ds,
                            const CentralityResult& cent,
                            const std::vector<ReciprocityResult>& recips);

std::string fit_result_json(const FitResult& fit);

}  // namespace cdrscope
