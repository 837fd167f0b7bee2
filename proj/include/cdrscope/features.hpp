#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cdrscope/community.hpp"
#include "cdrscope/dataset.hpp"
#include "cdrscope/graph.hpp"
#include "cdrscope/netmetrics.hpp"

namespace cdrscope {

enum class FeatureGroup : uint8_t {
    Network,
    Consumption,
    Correspondent,
    Reciprocated,
    Mobility,
    Location,
};
constexpr int kFeatureGroupCount = 6;
const char* feature_group_name(FeatureGroup g);

enum class Direction : uint8_t { In, Out, InOut, None };
enum class KindAxis : uint8_t { Voice, Data, All, None };

// One column of the feature matrix: a base statistic expanded over the
// window/kind/direction axes. Axes a statistic does not vary over are None;
// the column name concatenates the non-empty parts, e.g.
// "uniqCorrDay20161224DataInOut".
struct FeatureSpec {
    FeatureGroup group = FeatureGroup::Network;
    std::string stat;
    std::string window;  // window token ("Total", "Day20161224", "Mon", "h14", ...)
    KindAxis kind = KindAxis::None;
    Direction dir = Direction::None;

    std::string name() const;
};

struct FeatureColumn {
    FeatureSpec spec;
    std::vector<double> values;  // one per internal user, indexed by user id
};

struct FeatureExtractOptions {
    // Time-of-day buckets per day of week for reciprocation cells. Must
    // divide 24; 24 gives the full hour-of-week expansion.
    int reciprocated_buckets = 4;
    int64_t response_window_s = 3600;
    double regular_msgs_per_week = 5.0;
    double regular_calls_per_week = 2.0;
    bool location_one_hot = false;  // add 0/1 columns for the top-1 tower id
};

// Event volume per window/direction/kind: event count, total and mean call
// duration (voice cells only), and mean gap between consecutive events.
std::vector<FeatureColumn> extract_consumption(const Dataset& ds, const WindowSet& ws);

// Distinct counterpart counts per window/direction/kind, plus
// regular-correspondent counts (per-week exchange thresholds over the whole
// window) and the share of incoming events that are messages.
std::vector<FeatureColumn> extract_correspondent(const Dataset& ds, const WindowSet& ws,
                                                 const FeatureExtractOptions& opt = {});

// Incoming events answered with a same-kind event to the same party within
// the response window, bucketed by day-of-week and time-of-day of the
// incoming event; plus total counts and median time-to-return per kind.
std::vector<FeatureColumn> extract_reciprocated(const Dataset& ds, const WindowSet& ws,
                                                const FeatureExtractOptions& opt = {});

// Tower-based movement statistics from located outgoing events: mean daily
// enclosing-circle radius, mean travel distance per day of week, size of the
// smallest tower set covering 90% of records, mean distinct towers per week.
std::vector<FeatureColumn> extract_mobility(const Dataset& ds, const WindowSet& ws);

// Default-rate encoding of each user's two most used towers. Tower rates are
// estimated from train users only; towers no train user touched fall back to
// the global train default rate, as do users with no located events.
std::vector<FeatureColumn> extract_location(const Dataset& ds,
                                            const std::vector<NodeId>& train_ids,
                                            const FeatureExtractOptions& opt = {});

// Per-user graph position: total degree, weighted reciprocity (unscored
// nodes get 0), harmonic centrality, and the user's biggest community
// encoded by its size rank plus that community's size.
std::vector<FeatureColumn> extract_network(const Dataset& ds, const WeightedDigraph& g,
                                           const CentralityResult& cent,
                                           const ReciprocityResult& recip,
                                           const CommunityCover& cover);

// Dense normalized matrix. Rows are internal users (row index = user id);
// values are z-scores computed from train-row statistics.
struct FeatureMatrix {
    uint32_t n = 0;
    uint32_t p = 0;
    std::vector<double> x;  // row-major, n * p
    std::vector<FeatureSpec> specs;
    std::vector<std::string> names;
    std::vector<double> mu;     // train mean per kept column
    std::vector<double> sigma;  // train standard deviation per kept column
    std::vector<std::string> dropped;  // constant columns removed at assembly
    std::vector<uint8_t> y;         // default label per row
    std::vector<uint8_t> in_train;  // per row
    int business_start_hour = 8;
    int business_end_hour = 18;

    double at(uint32_t row, uint32_t col) const { return x[size_t(row) * p + col]; }
    double raw(uint32_t row, uint32_t col) const {
        return at(row, col) * sigma[col] + mu[col];
    }
    std::vector<uint32_t> train_rows() const;
    std::vector<uint32_t> test_rows() const;
    std::map<std::string, uint32_t> group_counts() const;
    // Index of a named column, or -1.
    int64_t column_index(const std::string& name) const;
};

// Sorts columns by (group, name), drops constants, and z-scores every row
// with train statistics.
FeatureMatrix assemble_and_normalize(std::vector<FeatureColumn> columns, const Dataset& ds,
                                     const std::vector<NodeId>& train_ids);

// Same matrix restricted to the given columns (normalization kept as is).
FeatureMatrix subset_columns(const FeatureMatrix& fm, const std::vector<uint32_t>& keep);
std::vector<uint32_t> columns_in_group(const FeatureMatrix& fm, FeatureGroup g);
std::vector<uint32_t> columns_not_in_group(const FeatureMatrix& fm, FeatureGroup g);

// r_pb = (M1 - M0)/s_n * sqrt(n1*n0/n^2), s_n the population standard
// deviation of the column. Zero-variance columns correlate 0 by convention;
// a single-class label vector is an error.
double point_biserial(const std::vector<double>& column, const std::vector<uint8_t>& y);

// Per-column point-biserial correlation against the default label, sorted by
// |r| descending (ties by name). Computed on train rows by default.
std::vector<std::pair<std::string, double>> rank_point_biserial(const FeatureMatrix& fm,
                                                                bool train_only = true);

// Collapses the wide window families on their raw values: per-day columns
// into weekday/weekend means, per-hour into business/off-hours means,
// per-week and per-month into single means, reciprocation cells into per-day
// means; then re-normalizes. Backs the aggregated model variant.
FeatureMatrix aggregate_features(const FeatureMatrix& fm);

// Raw row-major binary dump plus a JSON sidecar with names, groups, labels
// and normalization statistics.
void save_feature_matrix(const FeatureMatrix& fm, const std::string& bin_path,
                         const std::string& json_path);
FeatureMatrix load_feature_matrix(const std::string& bin_path, const std::string& json_path);

}  // namespace cdrscope
