#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cdrscope/features.hpp"
#include "cdrscope/models.hpp"

namespace cdrscope {

// ---------------------------------------------------------------------------
// Confusion metrics

struct ConfusionCounts {
    uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct ConfusionMetrics {
    ConfusionCounts counts;
    double recall = 0.0;
    double fall_out = 0.0;
    double precision = 0.0;
    // 0/0 conventions: the ratio is reported as 0 and the case is flagged.
    bool no_actual_positives = false;
    bool no_predicted_positives = false;
    bool no_actual_negatives = false;
};

ConfusionMetrics confusion_metrics(const std::vector<uint8_t>& predicted,
                                   const std::vector<uint8_t>& actual);

// ---------------------------------------------------------------------------
// ROC

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double threshold = 0.0;  // predict positive when score >= threshold
};

struct RocCurve {
    std::vector<RocPoint> points;  // starts at (0,0), ends at (1,1)
    double auc = 0.0;
    uint64_t positives = 0;
    uint64_t negatives = 0;
};

// Sweeps every distinct score as a threshold; tied scores move as one block,
// AUC by the trapezoid rule. Throws when only one class is present.
RocCurve roc_curve(const std::vector<double>& scores, const std::vector<uint8_t>& actual);

void write_roc_csv(const RocCurve& roc, const std::string& path);

// ---------------------------------------------------------------------------
// Ranking stability

struct StabilityScore {
    double overlap = 0.0;  // |A(depth) inter B(depth)| / depth
    double aos = 0.0;      // mean over d<=depth of |A(d) inter B(d)| / d
};

StabilityScore ranking_stability(const std::vector<NodeId>& a, const std::vector<NodeId>& b,
                                 size_t depth);

// ---------------------------------------------------------------------------
// Model recipes over a feature matrix

// Fit on the matrix's train rows, score every row (higher = closer to
// default). beta holds per-column coefficients in the matrix's own column
// space (back-mapped when the recipe reduces dimensions first); recipes that
// cannot provide it leave it empty.
struct FitOutcome {
    std::vector<double> scores;
    std::vector<double> beta;
    double intercept = 0.0;
};

using ModelRecipe = std::function<FitOutcome(const FeatureMatrix&)>;

// Scores restricted to test rows, in row order.
std::vector<double> test_scores(const FeatureMatrix& fm, const std::vector<double>& scores);

// Threshold the test-row scores at the top quantile and compare with labels.
ConfusionMetrics topquantile_confusion(const FeatureMatrix& fm,
                                       const std::vector<double>& scores, double q = 0.95);

// ---------------------------------------------------------------------------
// Feature-group ablation

struct AblationRow {
    std::string variant;  // "full", "-<group>", "correspondent-only"
    uint32_t columns = 0;
    double recall = 0.0;
    double fall_out = 0.0;
    double precision = 0.0;
    double delta_recall = 0.0;     // full minus this variant
    double delta_precision = 0.0;
    bool failed = false;
    std::string error;
};

// Reference fit, one row per excluded group, plus a correspondent-only row.
// Per-row fit errors land in the row instead of aborting the table.
std::vector<AblationRow> ablate_groups(const FeatureMatrix& fm, const ModelRecipe& recipe,
                                       double q = 0.95);

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path);

// ---------------------------------------------------------------------------
// Coefficient back-mapping and contributions

// C * beta_pc: coefficients over the original columns. beta_pc must have
// basis.p1 entries.
std::vector<double> backmap_coefficients(const PcaBasis& basis,
                                         const std::vector<double>& beta_pc);

struct ContributionTable {
    std::vector<std::string> names;
    std::vector<double> defaulted_mean;      // beta_j * mean(x_j | defaulted)
    std::vector<double> paying_mean;
    std::vector<double> defaulted_relative;  // |mean| / sum of |mean| in class
    std::vector<double> paying_relative;
    double score_mean_defaulted = 0.0;  // intercept + beta.x, class mean
    double score_mean_paying = 0.0;
};

ContributionTable mean_relative_contribution(const FeatureMatrix& fm,
                                             const std::vector<double>& beta,
                                             double intercept, bool train_only = true);

// ---------------------------------------------------------------------------
// Pratt variable importance

// sum of beta_j * rho_j; the share normalizer that makes d_j sum to one.
double pratt_r2(const std::vector<double>& beta_std, const std::vector<double>& rho);

// d_j = beta_j * rho_j / r2. Throws when r2 <= 0.
std::vector<double> pratt_vi(const std::vector<double>& beta_std,
                             const std::vector<double>& rho, double r2);

// Diagnostics: pseudo-R^2 of the weighted least-squares representation at
// the fitted scores, and the latent-variance flavor.
double wls_pseudo_r2(const std::vector<double>& eta, const std::vector<uint8_t>& y);
double mckelvey_zavoina_r2(const std::vector<double>& eta);

// Per-column point-biserial correlation with the labels over train rows.
std::vector<double> label_correlations(const FeatureMatrix& fm, bool train_only = true);

struct ViStabilityReport {
    std::vector<std::string> removed;  // top-k importance columns, dropped
    double recall_before = 0.0;
    double recall_after = 0.0;
    double delta_recall = 0.0;  // before minus after
    double max_d_before = 0.0;
    double max_d_after = 0.0;  // largest d_j after the refit
};

// Ranks columns by Pratt importance from the recipe's coefficients, removes
// the top_k, refits, and reports the recall movement. The recipe must supply
// per-column coefficients.
ViStabilityReport vi_stability_check(const FeatureMatrix& fm, const ModelRecipe& recipe,
                                     size_t top_k, double q = 0.95);

}  // namespace cdrscope
