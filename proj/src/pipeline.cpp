#include "cdrscope/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "cdrscope/community.hpp"
#include "cdrscope/dataset.hpp"
#include "cdrscope/features.hpp"
#include "cdrscope/graph.hpp"
#include "cdrscope/netmetrics.hpp"
#include "cdrscope/rng.hpp"
#include "cdrscope/synthgen.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cdrscope {

namespace {

const std::vector<std::string> kStageOrder = {"generate",    "graph",    "metrics",
                                              "communities", "features", "train",
                                              "evaluate"};

uint64_t fnv64(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

size_t top_count(size_t m, double q) {
    size_t k = size_t(std::ceil((1.0 - q) * double(m) - 1e-9));
    return std::clamp<size_t>(k, 1, m);
}

// ---- model names -----------------------------------------------------------

enum class ModelKind {
    Random,
    GlmSmall,
    Pca,
    PcaAggr,
    Pval,
    Oversampled,
    LassoLogistic,
    LassoSvm,
};

struct ModelName {
    std::string raw;
    ModelKind kind;
    uint32_t pca_k = 0;
};

ModelName parse_model_name(const std::string& s) {
    ModelName m;
    m.raw = s;
    if (s == "random") m.kind = ModelKind::Random;
    else if (s == "glm-small") m.kind = ModelKind::GlmSmall;
    else if (s == "pca-aggr") m.kind = ModelKind::PcaAggr;
    else if (s == "pval-05") m.kind = ModelKind::Pval;
    else if (s == "oversampled-2") m.kind = ModelKind::Oversampled;
    else if (s == "lasso-logistic") m.kind = ModelKind::LassoLogistic;
    else if (s == "lasso-svm") m.kind = ModelKind::LassoSvm;
    else if (s.rfind("pca-", 0) == 0) {
        m.kind = ModelKind::Pca;
        const std::string tail = s.substr(4);
        if (tail.empty() || tail.find_first_not_of("0123456789") != std::string::npos)
            throw std::invalid_argument("unknown model name: " + s);
        long k = std::stol(tail);
        if (k < 1) throw std::invalid_argument("pca component count must be positive: " + s);
        m.pca_k = uint32_t(k);
    } else {
        throw std::invalid_argument("unknown model name: " + s);
    }
    return m;
}

// Whether the recipe reports coefficients in the feature matrix's column
// space (required for importance analysis).
bool beta_capable(const ModelName& m) {
    switch (m.kind) {
        case ModelKind::Pca:
        case ModelKind::Pval:
        case ModelKind::Oversampled:
        case ModelKind::LassoLogistic:
        case ModelKind::LassoSvm:
            return true;
        default:
            return false;
    }
}

// ---- window taxonomy toggles ------------------------------------------------

const char* const kDow[7] = {"Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"};

bool window_enabled(const PipelineConfig& cfg, const std::string& w) {
    if (w.empty() || w == "Total") return true;
    if (w == "Office" || w == "Rest") return cfg.windows_business;
    if (w == "Weekend" || w == "Weekday") return cfg.windows_weekend;
    if (w.rfind("Month", 0) == 0) return cfg.windows_month;
    if (w.rfind("Week", 0) == 0) return cfg.windows_week;
    if (w.rfind("Day", 0) == 0) return cfg.windows_day;
    if (w[0] == 'h') return cfg.windows_hour;
    for (const char* d : kDow)
        if (w.rfind(d, 0) == 0) return cfg.windows_dow;  // "Mon" and cells like "Monh6"
    return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

PipelineConfig pipeline_config_from_json(const std::string& text) {
    json j = json::parse(text);
    if (!j.is_object()) throw std::invalid_argument("pipeline config must be a JSON object");
    PipelineConfig c;
    for (const auto& [key, v] : j.items()) {
        if (key == "gen_config") c.gen_config = v.get<std::string>();
        else if (key == "events") c.events = v.get<std::string>();
        else if (key == "users") c.users = v.get<std::string>();
        else if (key == "towers") c.towers = v.get<std::string>();
        else if (key == "dataset_config") c.dataset_config = v.get<std::string>();
        else if (key == "out_dir") c.out_dir = v.get<std::string>();
        else if (key == "seed") c.seed = v.get<uint64_t>();
        else if (key == "threads") c.threads = v.get<unsigned>();
        else if (key == "train_fraction") c.train_fraction = v.get<double>();
        else if (key == "stages") c.stages = v.get<std::vector<std::string>>();
        else if (key == "windows_month") c.windows_month = v.get<bool>();
        else if (key == "windows_week") c.windows_week = v.get<bool>();
        else if (key == "windows_day") c.windows_day = v.get<bool>();
        else if (key == "windows_dow") c.windows_dow = v.get<bool>();
        else if (key == "windows_hour") c.windows_hour = v.get<bool>();
        else if (key == "windows_business") c.windows_business = v.get<bool>();
        else if (key == "windows_weekend") c.windows_weekend = v.get<bool>();
        else if (key == "reciprocated_buckets") c.reciprocated_buckets = v.get<int>();
        else if (key == "response_window_s") c.response_window_s = v.get<int64_t>();
        else if (key == "regular_msgs_per_week") c.regular_msgs_per_week = v.get<double>();
        else if (key == "regular_calls_per_week") c.regular_calls_per_week = v.get<double>();
        else if (key == "location_one_hot") c.location_one_hot = v.get<bool>();
        else if (key == "cutoff_max") c.cutoff_max = v.get<uint32_t>();
        else if (key == "degree_xmin") c.degree_xmin = v.get<uint32_t>();
        else if (key == "centrality_exact_threshold")
            c.centrality_exact_threshold = v.get<size_t>();
        else if (key == "centrality_samples") c.centrality_samples = v.get<size_t>();
        else if (key == "slpa_T") c.slpa_T = v.get<uint32_t>();
        else if (key == "slpa_r") c.slpa_r = v.get<double>();
        else if (key == "models") c.models = v.get<std::vector<std::string>>();
        else if (key == "pca_dense_limit") c.pca_dense_limit = v.get<uint32_t>();
        else if (key == "pca_aggr_k") c.pca_aggr_k = v.get<uint32_t>();
        else if (key == "pval_threshold") c.pval_threshold = v.get<double>();
        else if (key == "pval_base_components") c.pval_base_components = v.get<uint32_t>();
        else if (key == "oversample_factor") c.oversample_factor = v.get<uint32_t>();
        else if (key == "lasso_grid") c.lasso_grid = v.get<std::vector<double>>();
        else if (key == "lasso_grid_size") c.lasso_grid_size = v.get<uint32_t>();
        else if (key == "lasso_grid_ratio") c.lasso_grid_ratio = v.get<double>();
        else if (key == "lasso_folds") c.lasso_folds = v.get<uint32_t>();
        else if (key == "svm_reg") c.svm_reg = v.get<double>();
        else if (key == "svm_epochs") c.svm_epochs = v.get<uint32_t>();
        else if (key == "svm_lr0") c.svm_lr0 = v.get<double>();
        else if (key == "eval_quantile") c.eval_quantile = v.get<double>();
        else if (key == "ablation_model") c.ablation_model = v.get<std::string>();
        else if (key == "importance_model") c.importance_model = v.get<std::string>();
        else if (key == "importance_top") c.importance_top = v.get<uint32_t>();
        else if (key == "vi_stability_top") c.vi_stability_top = v.get<uint32_t>();
        else throw std::invalid_argument("unknown key in pipeline config: " + key);
    }
    return c;
}

PipelineConfig pipeline_config_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open pipeline config: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return pipeline_config_from_json(ss.str());
}

std::string pipeline_config_json(const PipelineConfig& c) {
    json j;
    j["gen_config"] = c.gen_config;
    j["events"] = c.events;
    j["users"] = c.users;
    j["towers"] = c.towers;
    j["dataset_config"] = c.dataset_config;
    j["out_dir"] = c.out_dir;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["train_fraction"] = c.train_fraction;
    j["stages"] = c.stages;
    j["windows_month"] = c.windows_month;
    j["windows_week"] = c.windows_week;
    j["windows_day"] = c.windows_day;
    j["windows_dow"] = c.windows_dow;
    j["windows_hour"] = c.windows_hour;
    j["windows_business"] = c.windows_business;
    j["windows_weekend"] = c.windows_weekend;
    j["reciprocated_buckets"] = c.reciprocated_buckets;
    j["response_window_s"] = c.response_window_s;
    j["regular_msgs_per_week"] = c.regular_msgs_per_week;
    j["regular_calls_per_week"] = c.regular_calls_per_week;
    j["location_one_hot"] = c.location_one_hot;
    j["cutoff_max"] = c.cutoff_max;
    j["degree_xmin"] = c.degree_xmin;
    j["centrality_exact_threshold"] = c.centrality_exact_threshold;
    j["centrality_samples"] = c.centrality_samples;
    j["slpa_T"] = c.slpa_T;
    j["slpa_r"] = c.slpa_r;
    j["models"] = c.models;
    j["pca_dense_limit"] = c.pca_dense_limit;
    j["pca_aggr_k"] = c.pca_aggr_k;
    j["pval_threshold"] = c.pval_threshold;
    j["pval_base_components"] = c.pval_base_components;
    j["oversample_factor"] = c.oversample_factor;
    j["lasso_grid"] = c.lasso_grid;
    j["lasso_grid_size"] = c.lasso_grid_size;
    j["lasso_grid_ratio"] = c.lasso_grid_ratio;
    j["lasso_folds"] = c.lasso_folds;
    j["svm_reg"] = c.svm_reg;
    j["svm_epochs"] = c.svm_epochs;
    j["svm_lr0"] = c.svm_lr0;
    j["eval_quantile"] = c.eval_quantile;
    j["ablation_model"] = c.ablation_model;
    j["importance_model"] = c.importance_model;
    j["importance_top"] = c.importance_top;
    j["vi_stability_top"] = c.vi_stability_top;
    return j.dump(2);
}

std::string config_hash(const PipelineConfig& cfg) {
    PipelineConfig c = cfg;
    c.out_dir.clear();  // where a run lives does not change what it computes
    c.threads = 0;
    return hex64(fnv64(pipeline_config_json(c)));
}

void validate_config(const PipelineConfig& cfg) {
    auto fail = [](const std::string& m) { throw std::invalid_argument(m); };

    std::set<std::string> enabled;
    const std::vector<std::string>& requested =
        cfg.stages.empty() ? kStageOrder : cfg.stages;
    for (const std::string& s : requested) {
        if (std::find(kStageOrder.begin(), kStageOrder.end(), s) == kStageOrder.end())
            fail("unknown stage: " + s);
        enabled.insert(s);
    }
    if (cfg.models.empty()) fail("model list is empty");
    std::set<std::string> seen;
    for (const std::string& m : cfg.models) {
        parse_model_name(m);
        if (!seen.insert(m).second) fail("duplicate model: " + m);
    }
    if (!cfg.ablation_model.empty()) {
        // the ablation recipe refits on column subsets, so it must be driven
        // entirely by the matrix
        if (parse_model_name(cfg.ablation_model).kind == ModelKind::GlmSmall)
            fail("ablation model must fit from the feature matrix alone: glm-small");
    }
    if (!cfg.importance_model.empty()) {
        if (!beta_capable(parse_model_name(cfg.importance_model)))
            fail("importance model cannot report per-column coefficients: " +
                 cfg.importance_model);
    }

    if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0))
        fail("train_fraction outside (0, 1)");
    if (!(cfg.eval_quantile > 0.0 && cfg.eval_quantile < 1.0))
        fail("eval_quantile outside (0, 1)");
    if (cfg.reciprocated_buckets < 1 || 24 % cfg.reciprocated_buckets != 0)
        fail("reciprocated_buckets must divide 24");
    if (cfg.response_window_s <= 0) fail("response_window_s must be positive");
    if (cfg.cutoff_max < 2) fail("cutoff_max below 2");
    if (cfg.slpa_T < 1) fail("slpa_T below 1");
    if (!(cfg.slpa_r > 0.0 && cfg.slpa_r <= 1.0)) fail("slpa_r outside (0, 1]");
    if (cfg.oversample_factor < 2) fail("oversample_factor below 2");
    if (cfg.lasso_folds < 2) fail("lasso_folds below 2");
    if (!(cfg.pval_threshold > 0.0 && cfg.pval_threshold <= 1.0))
        fail("pval_threshold outside (0, 1]");
    if (cfg.pval_base_components < 1) fail("pval_base_components below 1");
    if (cfg.svm_reg <= 0.0) fail("svm_reg must be positive");
    if (cfg.pca_aggr_k < 1) fail("pca_aggr_k below 1");
    if (cfg.importance_top < 1) fail("importance_top below 1");
    if (cfg.vi_stability_top < 1) fail("vi_stability_top below 1");

    // a run needs events whenever any enabled stage consumes them
    bool features_on_disk = fs::exists(fs::path(cfg.out_dir) / "features.bin") &&
                            fs::exists(fs::path(cfg.out_dir) / "features.json");
    bool glm_small = std::find(cfg.models.begin(), cfg.models.end(), "glm-small") !=
                     cfg.models.end();
    bool model_stages = enabled.count("train") || enabled.count("evaluate");
    bool need_ds = enabled.count("graph") || enabled.count("metrics") ||
                   enabled.count("communities") || enabled.count("features") ||
                   (model_stages && (!features_on_disk || glm_small));
    bool have_source = enabled.count("generate") ||
                       (!cfg.events.empty() && !cfg.users.empty() && !cfg.towers.empty() &&
                        !cfg.dataset_config.empty());
    if (need_ds && !have_source)
        fail("no data source: enable the generate stage or provide events/users/towers "
             "and dataset_config paths");
}

// ---------------------------------------------------------------------------
// compare_models

std::vector<ModelEval> compare_models(std::vector<ModelEval> rows) {
    std::sort(rows.begin(), rows.end(), [](const ModelEval& a, const ModelEval& b) {
        if (a.recall != b.recall) return a.recall > b.recall;
        if (a.fall_out != b.fall_out) return a.fall_out < b.fall_out;
        if (a.precision != b.precision) return a.precision > b.precision;
        return a.name < b.name;
    });
    return rows;
}

// ---------------------------------------------------------------------------
// Pipeline state

namespace {

struct TrainView {
    std::vector<double> x;  // train rows, row-major
    std::vector<uint8_t> y;
    size_t n = 0;
};

TrainView train_view(const FeatureMatrix& fm) {
    TrainView tv;
    std::vector<uint32_t> rows = fm.train_rows();
    tv.n = rows.size();
    tv.x.reserve(tv.n * fm.p);
    tv.y.reserve(tv.n);
    for (uint32_t r : rows) {
        const double* begin = fm.x.data() + size_t(r) * fm.p;
        tv.x.insert(tv.x.end(), begin, begin + fm.p);
        tv.y.push_back(fm.y[r]);
    }
    return tv;
}

std::vector<double> submatrix(const std::vector<double>& x, size_t n, size_t p,
                              const std::vector<uint32_t>& cols) {
    std::vector<double> out;
    out.reserve(n * cols.size());
    for (size_t i = 0; i < n; ++i)
        for (uint32_t c : cols) out.push_back(x[i * p + c]);
    return out;
}

struct FittedModel {
    FitOutcome out;
    json meta;  // model internals for the artifact and the report
    std::vector<std::string> warnings;
};

struct State {
    PipelineConfig cfg;
    std::set<std::string> enabled;
    fs::path out;
    std::vector<std::string> artifacts;  // relative paths written this run

    bool generated = false;
    bool have_ds = false;
    Dataset ds;

    bool have_graph = false;
    WeightedDigraph g;

    bool have_cent = false;
    CentralityResult cent;
    ReciprocityResult recip_weighted;

    bool have_cover = false;
    CommunityCover cover;

    bool have_fm = false;
    bool fm_loaded_from_disk = false;
    FeatureMatrix fm;
    std::vector<std::string> split_warnings;

    std::map<std::string, FittedModel> fits;
    std::vector<AblationRow> abl_rows;

    json report;  // accumulates stage summaries
};

void track(State& st, const fs::path& rel) { st.artifacts.push_back(rel.generic_string()); }

void write_text(State& st, const fs::path& rel, const std::string& content) {
    fs::path full = st.out / rel;
    fs::create_directories(full.parent_path());
    std::ofstream f(full, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + full.string());
    f << content;
    f.close();
    track(st, rel);
}

[[noreturn]] void stage_fail(const std::string& stage, const std::string& what) {
    throw StageError(stage, what);
}

template <typename F>
auto stage_guard(const std::string& stage, F&& f) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        stage_fail(stage, e.what());
    }
}

// ---- ensure chain (computes prerequisites without emitting their artifacts)

void ensure_dataset(State& st) {
    if (st.have_ds) return;
    stage_guard("parse", [&] {
        const PipelineConfig& c = st.cfg;
        if (c.events.empty() || c.users.empty() || c.towers.empty() ||
            c.dataset_config.empty())
            throw std::runtime_error("no dataset on hand and no input paths configured");
        DatasetConfig dc = dataset_config_from_json_file(c.dataset_config);
        st.ds = parse_dataset(c.events, c.users, c.towers, dc);
        st.have_ds = true;
    });
}

void ensure_graph(State& st) {
    if (st.have_graph) return;
    ensure_dataset(st);
    stage_guard("graph", [&] {
        st.g = build_weighted(st.ds);
        st.have_graph = true;
    });
}

void ensure_centrality(State& st) {
    if (st.have_cent) return;
    ensure_graph(st);
    stage_guard("metrics", [&] {
        CentralityOptions copt;
        copt.exact_threshold = st.cfg.centrality_exact_threshold;
        copt.sample_count = st.cfg.centrality_samples;
        copt.seed = st.cfg.seed;
        copt.threads = st.cfg.threads;
        st.cent = harmonic_centrality(st.g, copt);
        st.recip_weighted = reciprocity(st.g, ReciprocityVariant::Weighted);
        st.have_cent = true;
    });
}

void ensure_cover(State& st) {
    if (st.have_cover) return;
    ensure_graph(st);
    stage_guard("communities", [&] {
        st.cover = slpa_detect(st.g, st.cfg.slpa_T, st.cfg.slpa_r, st.cfg.seed);
        st.have_cover = true;
    });
}

void compute_features(State& st) {
    ensure_dataset(st);
    ensure_centrality(st);
    ensure_cover(st);
    stage_guard("features", [&] {
        const Dataset& ds = st.ds;
        WindowSet ws(ds.config);
        FeatureExtractOptions fopt;
        fopt.reciprocated_buckets = st.cfg.reciprocated_buckets;
        fopt.response_window_s = st.cfg.response_window_s;
        fopt.regular_msgs_per_week = st.cfg.regular_msgs_per_week;
        fopt.regular_calls_per_week = st.cfg.regular_calls_per_week;
        fopt.location_one_hot = st.cfg.location_one_hot;

        Split split = split_train_test(ds, st.cfg.train_fraction, st.cfg.seed);
        st.split_warnings = split.warnings;

        std::vector<FeatureColumn> cols;
        auto take = [&](std::vector<FeatureColumn> v) {
            for (FeatureColumn& c : v)
                if (window_enabled(st.cfg, c.spec.window)) cols.push_back(std::move(c));
        };
        take(extract_network(ds, st.g, st.cent, st.recip_weighted, st.cover));
        take(extract_consumption(ds, ws));
        take(extract_correspondent(ds, ws, fopt));
        take(extract_reciprocated(ds, ws, fopt));
        take(extract_mobility(ds, ws));
        take(extract_location(ds, split.train_ids, fopt));

        st.fm = assemble_and_normalize(std::move(cols), ds, split.train_ids);
        st.have_fm = true;
        st.fm_loaded_from_disk = false;
    });
}

void ensure_features(State& st) {
    if (st.have_fm) return;
    // reuse a persisted matrix only when this run was not asked to build one
    if (!st.enabled.count("features")) {
        fs::path bin = st.out / "features.bin";
        fs::path side = st.out / "features.json";
        if (fs::exists(bin) && fs::exists(side)) {
            stage_guard("features", [&] {
                st.fm = load_feature_matrix(bin.string(), side.string());
                st.have_fm = true;
                st.fm_loaded_from_disk = true;
            });
            return;
        }
    }
    compute_features(st);
}

// ---- model recipes ----------------------------------------------------------

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

FittedModel fit_random(State& st) {
    FittedModel fmod;
    Rng rng = Rng::derive(st.cfg.seed, fnv64("random-scores"));
    fmod.out.scores.resize(st.fm.n);
    for (double& s : fmod.out.scores) s = rng.uniform01();
    fmod.meta["kind"] = "random";
    return fmod;
}

FittedModel fit_glm_small(State& st) {
    // the compact interpretable baseline: graph-position columns, the user's
    // main tower risk, and age
    if (!st.have_ds) throw std::runtime_error("glm-small needs the dataset for user ages");
    const FeatureMatrix& fm = st.fm;
    std::vector<uint32_t> cols;
    std::vector<std::string> used;
    for (const char* name : {"degreeTotal", "recipWeighted", "harmonicCent", "commSizeRank",
                             "commSize", "towerPdTop1"}) {
        int64_t idx = fm.column_index(name);
        if (idx >= 0) {
            cols.push_back(uint32_t(idx));
            used.push_back(name);
        }
    }
    if (cols.size() < 3)
        throw std::runtime_error("glm-small found too few of its named columns");

    std::vector<uint32_t> train = fm.train_rows();
    double age_mu = 0.0, age_var = 0.0;
    for (uint32_t r : train) age_mu += st.ds.users[r].age;
    age_mu /= double(train.size());
    for (uint32_t r : train) {
        double d = st.ds.users[r].age - age_mu;
        age_var += d * d;
    }
    double age_sd = std::sqrt(age_var / double(train.size()));

    size_t p = cols.size() + 1;
    auto design_row = [&](uint32_t r, std::vector<double>& out) {
        for (uint32_t c : cols) out.push_back(fm.at(r, c));
        out.push_back(age_sd > 0.0 ? (st.ds.users[r].age - age_mu) / age_sd : 0.0);
    };
    std::vector<double> xt;
    std::vector<uint8_t> yt;
    xt.reserve(train.size() * p);
    for (uint32_t r : train) {
        design_row(r, xt);
        yt.push_back(fm.y[r]);
    }
    LogisticModel lm = logistic_fit(xt, train.size(), p, yt);

    std::vector<double> xall;
    xall.reserve(size_t(fm.n) * p);
    for (uint32_t r = 0; r < fm.n; ++r) design_row(r, xall);

    FittedModel fmod;
    fmod.out.scores = logistic_predict(lm, xall, fm.n);
    fmod.out.intercept = lm.intercept;  // age lives outside the matrix, so no beta
    fmod.meta = json::parse(model_json(lm));
    fmod.meta["columns"] = used;
    fmod.meta["extra"] = "age";
    if (age_sd <= 0.0) fmod.warnings.push_back("age constant on train rows");
    return fmod;
}

FittedModel fit_pca(State& st, uint32_t k, const std::string& name) {
    const FeatureMatrix& fm = st.fm;
    TrainView tv = train_view(fm);
    FittedModel fmod;

    uint32_t cap = uint32_t(std::min<size_t>(tv.n, fm.p));
    uint32_t k_eff = std::min(k, cap);
    if (k_eff < k)
        fmod.warnings.push_back(name + ": component count clamped to " +
                                std::to_string(k_eff));

    PcaOptions popt;
    popt.dense_limit = st.cfg.pca_dense_limit;
    popt.seed = st.cfg.seed;
    PcaBasis basis = pca_fit(tv.x, tv.n, fm.p, k_eff, popt);
    for (const std::string& w : basis.warnings) fmod.warnings.push_back(name + ": " + w);

    std::vector<double> zt = pca_transform(tv.x, tv.n, basis);
    LogisticModel lm = logistic_fit(zt, tv.n, basis.p1, tv.y);
    std::vector<double> zall = pca_transform(fm.x, fm.n, basis);
    fmod.out.scores = logistic_predict(lm, zall, fm.n);
    fmod.out.beta = backmap_coefficients(basis, lm.beta);
    fmod.out.intercept = lm.intercept - dot(basis.mean, fmod.out.beta);

    fmod.meta = json::parse(model_json(lm));
    fmod.meta["basis"] = json::parse(basis_json(basis));
    if (st.enabled.count("train")) {
        fs::path rel = fs::path("models") / (name + "_basis.bin");
        fs::create_directories((st.out / rel).parent_path());
        save_pca_basis(basis, (st.out / rel).string());
        track(st, rel);
    }
    return fmod;
}

FittedModel fit_pca_aggr(State& st) {
    FeatureMatrix agg = aggregate_features(st.fm);
    TrainView tv = train_view(agg);
    FittedModel fmod;

    uint32_t cap = uint32_t(std::min<size_t>(tv.n, agg.p));
    uint32_t k_eff = std::min(st.cfg.pca_aggr_k, cap);
    if (k_eff < st.cfg.pca_aggr_k)
        fmod.warnings.push_back("pca-aggr: component count clamped to " +
                                std::to_string(k_eff));

    PcaOptions popt;
    popt.dense_limit = st.cfg.pca_dense_limit;
    popt.seed = st.cfg.seed;
    PcaBasis basis = pca_fit(tv.x, tv.n, agg.p, k_eff, popt);
    for (const std::string& w : basis.warnings) fmod.warnings.push_back("pca-aggr: " + w);

    std::vector<double> zt = pca_transform(tv.x, tv.n, basis);
    LogisticModel lm = logistic_fit(zt, tv.n, basis.p1, tv.y);
    std::vector<double> zall = pca_transform(agg.x, agg.n, basis);
    fmod.out.scores = logistic_predict(lm, zall, agg.n);
    fmod.out.intercept = lm.intercept;  // aggregated columns, so no full-space beta

    fmod.meta = json::parse(model_json(lm));
    fmod.meta["basis"] = json::parse(basis_json(basis));
    fmod.meta["aggregated_columns"] = agg.p;
    return fmod;
}

// Screens an orthogonal component basis, not raw columns: correlated raw
// features share their Wald information and the filter would see nothing.
FittedModel fit_pval(State& st) {
    const FeatureMatrix& fm = st.fm;
    TrainView tv = train_view(fm);
    FittedModel fmod;

    uint32_t cap = uint32_t(std::min<size_t>(tv.n, fm.p));
    uint32_t k_eff = std::min(st.cfg.pval_base_components, cap);
    if (k_eff < st.cfg.pval_base_components)
        fmod.warnings.push_back("pval-05: screening basis clamped to " +
                                std::to_string(k_eff) + " components");

    PcaOptions popt;
    popt.dense_limit = st.cfg.pca_dense_limit;
    popt.seed = st.cfg.seed;
    PcaBasis basis = pca_fit(tv.x, tv.n, fm.p, k_eff, popt);

    std::vector<double> zt = pca_transform(tv.x, tv.n, basis);
    LogisticModel full = logistic_fit(zt, tv.n, basis.p1, tv.y);
    PvalueFilterResult fr =
        filter_by_pvalue(zt, tv.n, basis.p1, tv.y, full, st.cfg.pval_threshold);

    std::vector<double> zall = pca_transform(fm.x, fm.n, basis);
    std::vector<double> zsub = submatrix(zall, fm.n, basis.p1, fr.kept);
    fmod.out.scores = logistic_predict(fr.model, zsub, fm.n);

    std::vector<double> beta_pc(basis.p1, 0.0);
    for (size_t i = 0; i < fr.kept.size(); ++i) beta_pc[fr.kept[i]] = fr.model.beta[i];
    fmod.out.beta = backmap_coefficients(basis, beta_pc);
    fmod.out.intercept = fr.model.intercept - dot(basis.mean, fmod.out.beta);
    if (full.separation_suspected)
        fmod.warnings.push_back("pval-05: separation suspected in the screening fit");

    fmod.meta = json::parse(model_json(fr.model));
    fmod.meta["kept"] = fr.kept;
    fmod.meta["screened_from"] = basis.p1;
    fmod.meta["basis"] = json::parse(basis_json(basis));
    if (st.enabled.count("train")) {
        fs::path rel = fs::path("models") / "pval-05_basis.bin";
        fs::create_directories((st.out / rel).parent_path());
        save_pca_basis(basis, (st.out / rel).string());
        track(st, rel);
    }
    return fmod;
}

FittedModel fit_oversampled(State& st) {
    const FeatureMatrix& fm = st.fm;
    TrainView tv = train_view(fm);
    OversampledData od = oversample(tv.x, tv.n, fm.p, tv.y, st.cfg.oversample_factor);
    LogisticModel lm = logistic_fit(od.x, od.n, fm.p, od.y);

    FittedModel fmod;
    fmod.out.scores = logistic_predict(lm, fm.x, fm.n);
    fmod.out.beta = lm.beta;
    fmod.out.intercept = lm.intercept;
    fmod.meta = json::parse(model_json(lm));
    fmod.meta["oversample_factor"] = st.cfg.oversample_factor;
    return fmod;
}

LassoOptions lasso_options(const PipelineConfig& cfg) {
    LassoOptions lo;
    lo.lambda_grid = cfg.lasso_grid;
    lo.grid_size = cfg.lasso_grid_size;
    lo.grid_ratio = cfg.lasso_grid_ratio;
    lo.folds = cfg.lasso_folds;
    lo.seed = cfg.seed;
    return lo;
}

FittedModel fit_lasso(State& st) {
    const FeatureMatrix& fm = st.fm;
    TrainView tv = train_view(fm);
    SparseLinearModel m = lasso_logistic_fit(tv.x, tv.n, fm.p, tv.y, lasso_options(st.cfg));

    FittedModel fmod;
    fmod.out.scores = linear_decision(m, fm.x, fm.n);
    fmod.out.beta = m.w;
    fmod.out.intercept = m.intercept;
    fmod.warnings = m.warnings;
    fmod.meta = json::parse(model_json(m));
    return fmod;
}

FittedModel fit_lasso_svm(State& st) {
    const FeatureMatrix& fm = st.fm;
    TrainView tv = train_view(fm);
    SparseLinearModel lasso =
        lasso_logistic_fit(tv.x, tv.n, fm.p, tv.y, lasso_options(st.cfg));
    if (lasso.support.empty())
        throw std::runtime_error("lasso selected no columns to hand to the svm");

    std::vector<double> xt = submatrix(tv.x, tv.n, fm.p, lasso.support);
    SvmOptions so;
    so.reg = st.cfg.svm_reg;
    so.epochs = st.cfg.svm_epochs;
    so.lr0 = st.cfg.svm_lr0;
    so.seed = st.cfg.seed;
    SparseLinearModel svm = linear_svm_fit(xt, tv.n, lasso.support.size(), tv.y, so);

    std::vector<double> xall = submatrix(fm.x, fm.n, fm.p, lasso.support);
    FittedModel fmod;
    fmod.out.scores = linear_decision(svm, xall, fm.n);
    fmod.out.beta.assign(fm.p, 0.0);
    for (size_t i = 0; i < lasso.support.size(); ++i)
        fmod.out.beta[lasso.support[i]] = svm.w[i];
    fmod.out.intercept = svm.intercept;
    for (const std::string& w : lasso.warnings) fmod.warnings.push_back(w);
    fmod.meta = json::parse(model_json(svm));
    fmod.meta["lasso"] = json::parse(model_json(lasso));
    return fmod;
}

FittedModel fit_model(State& st, const ModelName& mn) {
    switch (mn.kind) {
        case ModelKind::Random: return fit_random(st);
        case ModelKind::GlmSmall: return fit_glm_small(st);
        case ModelKind::Pca: return fit_pca(st, mn.pca_k, mn.raw);
        case ModelKind::PcaAggr: return fit_pca_aggr(st);
        case ModelKind::Pval: return fit_pval(st);
        case ModelKind::Oversampled: return fit_oversampled(st);
        case ModelKind::LassoLogistic: return fit_lasso(st);
        case ModelKind::LassoSvm: return fit_lasso_svm(st);
    }
    throw std::logic_error("unhandled model kind");
}

// A fresh recipe over any matrix, for ablation and importance refits. Only
// matrix-driven models qualify (glm-small and random read pipeline state).
ModelRecipe make_recipe(State& st, const ModelName& mn) {
    PipelineConfig cfg = st.cfg;
    std::set<std::string> no_artifacts;  // refits never write basis files
    return [cfg, mn, no_artifacts](const FeatureMatrix& fm) -> FitOutcome {
        State tmp;
        tmp.cfg = cfg;
        tmp.enabled = no_artifacts;
        tmp.fm = fm;
        tmp.have_fm = true;
        return fit_model(tmp, mn).out;
    };
}

// ---- stages -----------------------------------------------------------------

void stage_generate(State& st) {
    stage_guard("generate", [&] {
        GenConfig gc;
        if (!st.cfg.gen_config.empty()) {
            gc = gen_config_from_json_file(st.cfg.gen_config);
        } else {
            gc.seed = st.cfg.seed;
        }
        Dataset generated = generate(gc);

        fs::path data_rel = "data";
        fs::create_directories(st.out / data_rel);
        write_dataset(generated, (st.out / data_rel).string());
        track(st, data_rel / "events.csv");
        track(st, data_rel / "users.csv");
        track(st, data_rel / "towers.csv");
        write_text(st, data_rel / "gen_config.json", gen_config_json(gc) + "\n");
        write_dataset_config(generated.config, (st.out / data_rel / "dataset_config.json").string());
        track(st, data_rel / "dataset_config.json");

        json& summary = st.report["dataset"];
        summary["users"] = generated.n_internal;
        uint64_t defaulters = 0;
        for (const UserRecord& u : generated.users) defaulters += u.defaulted ? 1 : 0;
        summary["defaulters"] = defaulters;
        summary["events"] = generated.events.size();
        summary["generated"] = true;
        st.generated = true;

        // canonical ids come from the files, exactly as a later standalone
        // stage would see them
        bool more = false;
        for (const std::string& s : kStageOrder)
            if (s != "generate" && st.enabled.count(s)) more = true;
        if (more) {
            Dataset parsed = parse_dataset((st.out / data_rel / "events.csv").string(),
                                           (st.out / data_rel / "users.csv").string(),
                                           (st.out / data_rel / "towers.csv").string(),
                                           generated.config);
            if (parsed.stats.rejected_total() != 0)
                throw std::runtime_error("generated data failed to round trip");
            st.ds = std::move(parsed);
            st.have_ds = true;
        }
    });
}

void stage_graph(State& st) {
    ensure_graph(st);
    stage_guard("graph", [&] {
        write_edge_list_csv(st.g, st.ds, (st.out / "edges.csv").string());
        track(st, "edges.csv");

        Components comp = weak_components(st.g);
        DegreeDistribution dout =
            degree_distribution(st.g, DegreeDirection::Out, st.cfg.degree_xmin);
        DegreeDistribution din =
            degree_distribution(st.g, DegreeDirection::In, st.cfg.degree_xmin);

        json j;
        j["nodes"] = st.g.node_count();
        j["edges"] = st.g.edge_count();
        j["total_weight"] = st.g.total_weight();
        j["w_avg"] = st.g.w_avg();
        j["components"] = comp.sizes.size();
        j["gc_fraction"] = st.g.node_count()
                               ? double(comp.sizes[comp.giant]) / double(st.g.node_count())
                               : 0.0;
        auto dd = [](const DegreeDistribution& d) {
            json o;
            o["zero_degree_nodes"] = d.zero_degree_nodes;
            o["tail_points"] = d.tail_points;
            if (d.tail_exponent) o["tail_exponent"] = *d.tail_exponent;
            else o["tail_exponent"] = nullptr;
            return o;
        };
        j["degree_out"] = dd(dout);
        j["degree_in"] = dd(din);
        write_text(st, "graph.json", j.dump(2) + "\n");
        st.report["graph"] = j;
    });
}

void stage_metrics(State& st) {
    ensure_centrality(st);
    stage_guard("metrics", [&] {
        ReciprocityResult rb = reciprocity(st.g, ReciprocityVariant::Binary);
        ReciprocityResult rh = reciprocity(st.g, ReciprocityVariant::Hyper);
        ReciprocityCorrelation corr = reciprocity_metric_correlation(st.g, true);
        double pair_frac = reciprocated_pair_fraction(st.g);

        std::vector<double> weights;
        for (NodeId u = 0; u < st.g.node_count(); ++u)
            for_each_dyad(st.g, u, [&](NodeId v, uint32_t ow, uint32_t iw) {
                if (v > u) weights.push_back(double(ow) + double(iw));
            });
        FitResult fln = fit_distribution(weights, FitFamily::LogNormal);
        FitResult fse = fit_distribution(weights, FitFamily::StretchedExp);

        CutoffSweepResult sweep = cutoff_sweep(st.g, st.cfg.cutoff_max);

        write_node_metrics_csv((st.out / "node_metrics.csv").string(), st.ds, st.cent,
                               {st.recip_weighted, rb, rh});
        track(st, "node_metrics.csv");

        json j;
        j["centrality"] = {{"mean", st.cent.mean},
                           {"stddev", st.cent.stddev},
                           {"sampled", st.cent.sampled},
                           {"samples_used", st.cent.samples_used},
                           {"diameter", st.cent.diameter},
                           {"mean_path", st.cent.mean_path}};
        j["reciprocated_pair_fraction"] = pair_frac;
        j["reciprocity_correlation"] = {{"weighted_binary", corr.weighted_binary},
                                        {"weighted_hyper", corr.weighted_hyper},
                                        {"binary_hyper", corr.binary_hyper},
                                        {"nodes_used", corr.nodes_used},
                                        {"warnings", corr.warnings}};
        j["dyad_weight_fit_lognormal"] = json::parse(fit_result_json(fln));
        j["dyad_weight_fit_stretched"] = json::parse(fit_result_json(fse));
        json sw = json::array();
        for (const SweepRecord& r : sweep.records) {
            json o;
            o["cutoff"] = r.cutoff;
            o["gc_fraction"] = r.gc_fraction;
            o["edges"] = r.edges;
            o["isolated_fraction_outside_gc"] =
                std::isnan(r.isolated_fraction_outside_gc)
                    ? json(nullptr)
                    : json(r.isolated_fraction_outside_gc);
            sw.push_back(o);
        }
        auto curve = [](const CurveFit& f) {
            json o;
            o["ok"] = f.ok;
            o["param"] = f.param;
            o["scale"] = f.scale;
            o["r2"] = f.r2;
            if (!f.ok) o["error"] = f.error;
            return o;
        };
        j["cutoff_sweep"] = {{"records", sw},
                             {"gc_exponential", curve(sweep.gc_exponential)},
                             {"edge_power_law", curve(sweep.edge_power_law)}};
        write_text(st, "metrics.json", j.dump(2) + "\n");
        st.report["metrics"] = j;
    });
}

void stage_communities(State& st) {
    ensure_cover(st);
    stage_guard("communities", [&] {
        DistrictOverlap overlap =
            district_overlap(st.cover, st.ds.users, st.ds.n_internal, 3);
        write_cover_csv(st.cover, st.ds, (st.out / "communities.csv").string());
        track(st, "communities.csv");
        json j = json::parse(cover_summary_json(st.cover, overlap));
        write_text(st, "communities.json", j.dump(2) + "\n");
        st.report["communities"] = j;
    });
}

void stage_features(State& st) {
    compute_features(st);
    stage_guard("features", [&] {
        save_feature_matrix(st.fm, (st.out / "features.bin").string(),
                            (st.out / "features.json").string());
        track(st, "features.bin");
        track(st, "features.json");
    });
}

json feature_summary(const State& st) {
    json j;
    j["n"] = st.fm.n;
    j["p"] = st.fm.p;
    j["dropped_constant"] = st.fm.dropped.size();
    j["groups"] = st.fm.group_counts();
    j["loaded_from_disk"] = st.fm_loaded_from_disk;
    j["split_warnings"] = st.split_warnings;
    uint64_t train_n = 0, positives = 0;
    for (uint32_t i = 0; i < st.fm.n; ++i) {
        train_n += st.fm.in_train[i];
        positives += st.fm.y[i];
    }
    j["train_rows"] = train_n;
    j["positives"] = positives;
    return j;
}

void stage_train(State& st) {
    ensure_features(st);
    for (const std::string& name : st.cfg.models) {
        ModelName mn = parse_model_name(name);
        if (mn.kind == ModelKind::GlmSmall) ensure_dataset(st);
        try {
            FittedModel fmod = fit_model(st, mn);
            if (fmod.out.scores.size() != st.fm.n)
                throw std::runtime_error("model produced wrong score count");

            if (st.enabled.count("train")) {
                json art;
                art["name"] = name;
                art["config_hash"] = config_hash(st.cfg);
                art["seed"] = st.cfg.seed;
                art["warnings"] = fmod.warnings;
                art["model"] = fmod.meta;
                fs::path rel = fs::path("models") / (name + ".json");
                write_text(st, rel, art.dump(2) + "\n");

                std::string csv = "user_id,score\n";
                char buf[64];
                for (uint32_t r = 0; r < st.fm.n; ++r) {
                    std::snprintf(buf, sizeof buf, ",%.17g\n", fmod.out.scores[r]);
                    csv += st.have_ds ? st.ds.user_names.name(r) : std::to_string(r);
                    csv += buf;
                }
                write_text(st, fs::path("models") / (name + "_scores.csv"), csv);
            }
            st.fits.emplace(name, std::move(fmod));
        } catch (const std::exception& e) {
            stage_fail("train", name + ": " + e.what());
        }
    }
}

void ensure_models(State& st) {
    if (st.fits.empty()) stage_train(st);
}

// default ablation/importance pick: first listed model able to back its
// coefficients onto the matrix columns
std::string default_diag_model(const PipelineConfig& cfg) {
    for (const std::string& name : cfg.models)
        if (beta_capable(parse_model_name(name))) return name;
    return "";
}

void stage_evaluate(State& st) {
    ensure_features(st);
    ensure_models(st);
    stage_guard("evaluate", [&] {
        const FeatureMatrix& fm = st.fm;
        const double q = st.cfg.eval_quantile;

        std::vector<uint32_t> test_rows = fm.test_rows();
        size_t m_test = test_rows.size();
        uint64_t test_pos = 0;
        for (uint32_t r : test_rows) test_pos += fm.y[r];
        uint64_t test_neg = m_test - test_pos;
        size_t k = top_count(m_test, q);
        double bound = test_neg ? double(k) / double(test_neg) : 0.0;

        std::vector<ModelEval> rows;
        json jmodels;
        for (const std::string& name : st.cfg.models) {
            const FittedModel& fmod = st.fits.at(name);
            ConfusionMetrics cm = topquantile_confusion(fm, fmod.out.scores, q);

            std::vector<double> ts = test_scores(fm, fmod.out.scores);
            std::vector<uint8_t> ty;
            ty.reserve(m_test);
            for (uint32_t r : test_rows) ty.push_back(fm.y[r]);
            RocCurve roc = roc_curve(ts, ty);
            write_roc_csv(roc, (st.out / ("roc_" + name + ".csv")).string());
            track(st, "roc_" + name + ".csv");

            ModelEval ev;
            ev.name = name;
            ev.columns_used = fm.p;
            if (fmod.meta.contains("kept"))
                ev.columns_used = uint32_t(fmod.meta["kept"].size());
            if (fmod.meta.contains("support"))
                ev.columns_used = uint32_t(fmod.meta["support"].size());
            ev.recall = cm.recall;
            ev.fall_out = cm.fall_out;
            ev.precision = cm.precision;
            ev.auc = roc.auc;
            ev.counts = cm.counts;
            ev.has_beta = !fmod.out.beta.empty();
            ev.warnings = fmod.warnings;

            if (ev.fall_out > bound + 1e-12)
                throw std::logic_error("fall-out exceeded its quantile bound for " + name);

            json jm;
            jm["recall"] = ev.recall;
            jm["fall_out"] = ev.fall_out;
            jm["precision"] = ev.precision;
            jm["auc"] = ev.auc;
            jm["tp"] = ev.counts.tp;
            jm["fp"] = ev.counts.fp;
            jm["fn"] = ev.counts.fn;
            jm["tn"] = ev.counts.tn;
            jm["columns_used"] = ev.columns_used;
            jm["has_beta"] = ev.has_beta;
            jm["warnings"] = ev.warnings;
            jmodels[name] = jm;
            rows.push_back(std::move(ev));
        }

        std::vector<ModelEval> ranked = compare_models(rows);
        {
            std::string csv = "model,columns,recall,fall_out,precision,auc\n";
            char buf[160];
            for (const ModelEval& e : ranked) {
                std::snprintf(buf, sizeof buf, "%s,%u,%.17g,%.17g,%.17g,%.17g\n",
                              e.name.c_str(), e.columns_used, e.recall, e.fall_out,
                              e.precision, e.auc);
                csv += buf;
            }
            write_text(st, "comparison.csv", csv);
        }
        json jcomp = json::array();
        for (const ModelEval& e : ranked)
            jcomp.push_back({{"model", e.name},
                             {"recall", e.recall},
                             {"fall_out", e.fall_out},
                             {"precision", e.precision},
                             {"auc", e.auc}});

        // agreement between the two best rankings at the flagged-set depth
        json jstab;
        if (ranked.size() >= 2) {
            auto ranking = [&](const std::string& name) {
                const std::vector<double>& s = st.fits.at(name).out.scores;
                std::vector<NodeId> ids(test_rows.begin(), test_rows.end());
                std::sort(ids.begin(), ids.end(), [&](NodeId a, NodeId b) {
                    if (s[a] != s[b]) return s[a] > s[b];
                    return a < b;
                });
                return ids;
            };
            StabilityScore ss =
                ranking_stability(ranking(ranked[0].name), ranking(ranked[1].name), k);
            jstab = {{"model_a", ranked[0].name},
                     {"model_b", ranked[1].name},
                     {"depth", k},
                     {"overlap", ss.overlap},
                     {"aos", ss.aos}};
        }

        // ablation
        json jabl;
        std::string abl_model =
            st.cfg.ablation_model.empty() ? default_diag_model(st.cfg) : st.cfg.ablation_model;
        if (!abl_model.empty()) {
            ModelRecipe recipe = make_recipe(st, parse_model_name(abl_model));
            st.abl_rows = ablate_groups(fm, recipe, q);
            write_ablation_csv(st.abl_rows, (st.out / "ablation.csv").string());
            track(st, "ablation.csv");
            json arr = json::array();
            for (const AblationRow& r : st.abl_rows) {
                json o;
                o["variant"] = r.variant;
                o["columns"] = r.columns;
                o["recall"] = r.recall;
                o["fall_out"] = r.fall_out;
                o["precision"] = r.precision;
                o["delta_recall"] = r.delta_recall;
                o["delta_precision"] = r.delta_precision;
                o["failed"] = r.failed;
                if (r.failed) o["error"] = r.error;
                arr.push_back(o);
            }
            jabl = {{"model", abl_model}, {"rows", arr}};
        }

        // importance
        json jimp;
        std::string imp_model = st.cfg.importance_model.empty() ? default_diag_model(st.cfg)
                                                                : st.cfg.importance_model;
        if (!imp_model.empty()) {
            try {
                const FittedModel* fitted = nullptr;
                auto it = st.fits.find(imp_model);
                FittedModel fresh;
                if (it != st.fits.end() && !it->second.out.beta.empty()) {
                    fitted = &it->second;
                } else {
                    ModelRecipe recipe = make_recipe(st, parse_model_name(imp_model));
                    fresh.out = recipe(fm);
                    fitted = &fresh;
                }
                if (fitted->out.beta.size() != fm.p)
                    throw std::runtime_error("importance model reports no coefficients");

                std::vector<double> rho = label_correlations(fm, true);
                double r2 = pratt_r2(fitted->out.beta, rho);
                std::vector<double> d = pratt_vi(fitted->out.beta, rho, r2);

                std::vector<uint32_t> order(fm.p);
                for (uint32_t i = 0; i < fm.p; ++i) order[i] = i;
                std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
                    if (d[a] != d[b]) return d[a] > d[b];
                    return fm.names[a] < fm.names[b];
                });

                std::string csv = "rank,name,group,beta,rho,d\n";
                char buf[256];
                for (uint32_t i = 0; i < fm.p; ++i) {
                    uint32_t c = order[i];
                    std::snprintf(buf, sizeof buf, "%u,%s,%s,%.17g,%.17g,%.17g\n", i + 1,
                                  fm.names[c].c_str(),
                                  feature_group_name(fm.specs[c].group), fitted->out.beta[c],
                                  rho[c], d[c]);
                    csv += buf;
                }
                write_text(st, "importance.csv", csv);

                std::vector<uint32_t> train = fm.train_rows();
                std::vector<double> eta;
                std::vector<uint8_t> ytr;
                eta.reserve(train.size());
                for (uint32_t r : train) {
                    double s = fitted->out.intercept;
                    for (uint32_t j = 0; j < fm.p; ++j)
                        s += fitted->out.beta[j] * fm.at(r, j);
                    eta.push_back(s);
                    ytr.push_back(fm.y[r]);
                }

                double sum_d = 0.0;
                for (double v : d) sum_d += v;
                json top = json::array();
                for (uint32_t i = 0; i < std::min<uint32_t>(st.cfg.importance_top, fm.p);
                     ++i) {
                    uint32_t c = order[i];
                    top.push_back({{"name", fm.names[c]},
                                   {"group", feature_group_name(fm.specs[c].group)},
                                   {"beta", fitted->out.beta[c]},
                                   {"rho", rho[c]},
                                   {"d", d[c]}});
                }
                jimp = {{"model", imp_model},
                        {"r2", r2},
                        {"sum_d", sum_d},
                        {"wls_pseudo_r2", wls_pseudo_r2(eta, ytr)},
                        {"mz_r2", mckelvey_zavoina_r2(eta)},
                        {"top", top}};

                try {
                    ViStabilityReport vs = vi_stability_check(
                        fm, make_recipe(st, parse_model_name(imp_model)),
                        st.cfg.vi_stability_top, q);
                    jimp["vi_stability"] = {{"removed", vs.removed},
                                            {"recall_before", vs.recall_before},
                                            {"recall_after", vs.recall_after},
                                            {"delta_recall", vs.delta_recall},
                                            {"max_d_before", vs.max_d_before},
                                            {"max_d_after", vs.max_d_after}};
                } catch (const std::exception& e) {
                    jimp["vi_stability"] = {{"error", e.what()}};
                }
            } catch (const std::exception& e) {
                jimp = {{"model", imp_model}, {"error", e.what()}};
            }
        }

        json& rep = st.report;
        rep["features"] = feature_summary(st);
        rep["models"] = jmodels;
        rep["comparison"] = jcomp;
        if (!jstab.is_null()) rep["stability"] = jstab;
        if (!jabl.is_null()) rep["ablation"] = jabl;
        if (!jimp.is_null()) rep["importance"] = jimp;
        rep["threshold"] = {{"quantile", q},
                            {"flagged", k},
                            {"test_rows", m_test},
                            {"test_positives", test_pos},
                            {"fall_out_bound", bound}};
        write_text(st, "report.json", rep.dump(2) + "\n");
    });
}

}  // namespace

// ---------------------------------------------------------------------------

PipelineReport run_pipeline(const PipelineConfig& cfg) {
    validate_config(cfg);

    State st;
    st.cfg = cfg;
    st.out = cfg.out_dir;
    const std::vector<std::string>& requested = cfg.stages.empty() ? kStageOrder : cfg.stages;
    st.enabled.insert(requested.begin(), requested.end());
    fs::create_directories(st.out);

    st.report["config_hash"] = config_hash(cfg);
    st.report["seed"] = cfg.seed;

    PipelineReport out;
    out.config_hash = config_hash(cfg);
    out.seed = cfg.seed;

    try {
        for (const std::string& stage : kStageOrder) {
            if (!st.enabled.count(stage)) continue;
            if (stage == "generate") stage_generate(st);
            else if (stage == "graph") stage_graph(st);
            else if (stage == "metrics") stage_metrics(st);
            else if (stage == "communities") stage_communities(st);
            else if (stage == "features") stage_features(st);
            else if (stage == "train") stage_train(st);
            else if (stage == "evaluate") stage_evaluate(st);
            out.stages_run.push_back(stage);
        }
    } catch (const StageError& e) {
        json err;
        err["stage"] = e.stage;
        err["error"] = e.what();
        fs::create_directories(st.out);
        std::ofstream f(st.out / "error.json", std::ios::binary);
        f << err.dump(2) << "\n";
        throw;
    }

    // manifest: every artifact written by this run, hashed
    json manifest;
    manifest["config_hash"] = out.config_hash;
    manifest["seed"] = cfg.seed;
    json arts;
    std::sort(st.artifacts.begin(), st.artifacts.end());
    st.artifacts.erase(std::unique(st.artifacts.begin(), st.artifacts.end()),
                       st.artifacts.end());
    for (const std::string& rel : st.artifacts)
        arts[rel] = hex64(fnv64(read_file((st.out / rel).string())));
    manifest["artifacts"] = arts;
    {
        std::ofstream f(st.out / "manifest.json", std::ios::binary);
        if (!f) throw std::runtime_error("cannot write manifest");
        f << manifest.dump(2) << "\n";
    }

    out.artifacts = st.artifacts;
    out.manifest_path = (st.out / "manifest.json").string();
    if (st.enabled.count("evaluate")) {
        out.report_path = (st.out / "report.json").string();
        // rebuild the comparison rows for the caller
        if (st.report.contains("models")) {
            std::vector<ModelEval> rows;
            for (const auto& [name, jm] : st.report["models"].items()) {
                ModelEval e;
                e.name = name;
                e.columns_used = jm["columns_used"].get<uint32_t>();
                e.recall = jm["recall"].get<double>();
                e.fall_out = jm["fall_out"].get<double>();
                e.precision = jm["precision"].get<double>();
                e.auc = jm["auc"].get<double>();
                e.has_beta = jm["has_beta"].get<bool>();
                rows.push_back(std::move(e));
            }
            out.comparison = compare_models(rows);
        }
        out.ablation = st.abl_rows;
    }
    return out;
}

}  // namespace cdrscope
