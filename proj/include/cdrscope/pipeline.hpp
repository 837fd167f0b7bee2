#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdrscope/eval.hpp"

namespace cdrscope {

// Flat run configuration for the cdrscope binary. One JSON object, unknown
// keys rejected, validated before any stage executes.
struct PipelineConfig {
    // data sources: either a generator config (with the generate stage
    // enabled) or the three CSVs plus their dataset config
    std::string gen_config;
    std::string events;
    std::string users;
    std::string towers;
    std::string dataset_config;

    std::string out_dir = "out";
    uint64_t seed = 1;
    unsigned threads = 0;
    double train_fraction = 0.7;

    // canonical order: generate, graph, metrics, communities, features,
    // train, evaluate. Parsing runs implicitly when a stage needs events.
    std::vector<std::string> stages;  // empty = all

    // window taxonomy toggles; the total window is always on
    bool windows_month = true;
    bool windows_week = true;
    bool windows_day = true;
    bool windows_dow = true;
    bool windows_hour = true;
    bool windows_business = true;
    bool windows_weekend = true;

    // feature extraction
    int reciprocated_buckets = 4;
    int64_t response_window_s = 3600;
    double regular_msgs_per_week = 5.0;
    double regular_calls_per_week = 2.0;
    bool location_one_hot = false;

    // graph and metrics
    uint32_t cutoff_max = 50;
    uint32_t degree_xmin = 5;
    size_t centrality_exact_threshold = 50000;
    size_t centrality_samples = 2000;

    // communities
    uint32_t slpa_T = 30;
    double slpa_r = 0.3;

    // models: "random", "glm-small", "pca-<k>", "pca-aggr", "pval-05",
    // "oversampled-2", "lasso-logistic", "lasso-svm"
    std::vector<std::string> models = {"random",        "glm-small",      "pca-30",
                                       "pca-500",       "pval-05",        "oversampled-2",
                                       "lasso-logistic", "lasso-svm",     "pca-aggr"};
    uint32_t pca_dense_limit = 2000;
    uint32_t pca_aggr_k = 30;
    double pval_threshold = 0.5;
    uint32_t pval_base_components = 500;  // PCA width the filter screens
    uint32_t oversample_factor = 2;
    std::vector<double> lasso_grid;  // empty = automatic geometric grid
    uint32_t lasso_grid_size = 30;
    double lasso_grid_ratio = 1e-3;
    uint32_t lasso_folds = 5;
    double svm_reg = 1e-3;
    uint32_t svm_epochs = 2000;
    double svm_lr0 = 1.0;

    // evaluation
    double eval_quantile = 0.95;
    std::string ablation_model;    // empty = first beta-capable model in the list
    std::string importance_model;  // same default
    uint32_t importance_top = 20;
    uint32_t vi_stability_top = 3;
};

PipelineConfig pipeline_config_from_json(const std::string& text);
PipelineConfig pipeline_config_from_json_file(const std::string& path);
std::string pipeline_config_json(const PipelineConfig& cfg);

// Throws std::invalid_argument on contradictions a run would hit: unknown
// stage or model names, missing data sources, out-of-range knobs.
void validate_config(const PipelineConfig& cfg);

// FNV-1a over the canonical config serialization, minus out_dir and threads
// (where a run lives and how many workers it uses do not change its results).
std::string config_hash(const PipelineConfig& cfg);

// One evaluated model.
struct ModelEval {
    std::string name;
    uint32_t columns_used = 0;
    double recall = 0.0;
    double fall_out = 0.0;
    double precision = 0.0;
    double auc = 0.0;
    ConfusionCounts counts;
    bool has_beta = false;
    std::vector<std::string> warnings;
};

// Sorted by recall descending; ties by fall-out, then precision, then name.
std::vector<ModelEval> compare_models(std::vector<ModelEval> rows);

struct PipelineReport {
    std::string config_hash;
    uint64_t seed = 0;
    std::vector<std::string> stages_run;
    std::vector<ModelEval> comparison;
    std::vector<AblationRow> ablation;
    std::string report_path;    // report.json when the evaluate stage ran
    std::string manifest_path;  // always written on success
    std::vector<std::string> artifacts;  // files written by this run
};

// Executes the enabled stages in dependency order, writing artifacts under
// cfg.out_dir. A stage failure writes error.json naming the stage and
// rethrows. Identical configs reproduce identical bytes.
PipelineReport run_pipeline(const PipelineConfig& cfg);

// Stage failures carry the stage that died.
struct StageError : std::runtime_error {
    std::string stage;
    StageError(std::string stage_, const std::string& what_)
        : std::runtime_error(what_), stage(std::move(stage_)) {}
};

}  // namespace cdrscope
