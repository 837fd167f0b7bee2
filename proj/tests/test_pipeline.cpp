#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "cdrscope/pipeline.hpp"
#include "json.hpp"

using namespace cdrscope;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path case_dir(const std::string& name) {
    fs::path d = fs::temp_directory_path() / "cdrscope_pipeline_tests" / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    REQUIRE(f.good());
    f << text;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE_MESSAGE(f.good(), "missing " << p.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// small but non-degenerate synthetic population
std::string gen_json(uint32_t n_users, uint64_t seed, double daily, double boost) {
    json j;
    j["n_users"] = n_users;
    j["n_districts"] = 4;
    j["n_towers"] = 12;
    j["default_rate"] = 0.05;
    j["community_count"] = n_users / 4;
    j["community_min"] = 3;
    j["community_max"] = 9;
    j["community_edge_p"] = 0.3;
    j["extra_degree"] = 1.5;
    j["external_contacts"] = 0.5;
    j["dyad_rate_sigma"] = 2.0;
    j["daily_calls_target"] = daily;
    j["message_fraction"] = 0.35;
    j["mean_call_duration_s"] = 110.0;
    j["observation_start"] = "2016-10-01T00:00:00Z";
    j["observation_end"] = "2017-01-01T00:00:00Z";
    j["utc_offset_s"] = 0;
    j["business_start_hour"] = 8;
    j["business_end_hour"] = 18;
    j["holiday_start"] = "2016-12-24T00:00:00Z";
    j["holiday_end"] = "2016-12-27T00:00:00Z";
    j["holiday_contact_boost"] = boost;
    j["defaulter_tower_bias"] = 0.5;
    j["seed"] = seed;
    return j.dump(2);
}

PipelineConfig lean_config(const fs::path& dir, uint32_t n_users, uint64_t seed) {
    write_file(dir / "gen.json", gen_json(n_users, seed, 1.2, 3.0));
    PipelineConfig cfg;
    cfg.gen_config = (dir / "gen.json").string();
    cfg.out_dir = (dir / "out").string();
    cfg.seed = seed;
    cfg.windows_month = false;
    cfg.windows_week = false;
    cfg.windows_day = false;
    cfg.windows_dow = false;
    cfg.windows_hour = false;
    cfg.windows_business = false;
    cfg.windows_weekend = false;
    cfg.slpa_T = 15;
    cfg.centrality_exact_threshold = 800;  // holiday contacts push past this; sample
    cfg.centrality_samples = 300;
    cfg.lasso_grid_size = 12;
    cfg.lasso_folds = 3;
    return cfg;
}

int run_cli(const std::string& args) {
    std::string cmd = std::string(CDRSCOPE_BIN) + " " + args + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -2;
}

}  // namespace

TEST_CASE("config json round trip and defaults") {
    PipelineConfig d = pipeline_config_from_json("{}");
    CHECK(d.out_dir == "out");
    CHECK(d.seed == 1);
    CHECK(d.train_fraction == doctest::Approx(0.7));
    CHECK(d.stages.empty());
    CHECK(d.models.size() == 9);
    CHECK(d.eval_quantile == doctest::Approx(0.95));
    CHECK(d.windows_hour);
    CHECK(d.reciprocated_buckets == 4);

    PipelineConfig c = d;
    c.seed = 99;
    c.models = {"pca-7", "random"};
    c.stages = {"generate", "features"};
    c.lasso_grid = {0.5, 0.1};
    c.windows_day = false;
    PipelineConfig back = pipeline_config_from_json(pipeline_config_json(c));
    CHECK(pipeline_config_json(back) == pipeline_config_json(c));

    CHECK_THROWS_AS(pipeline_config_from_json("{\"no_such_key\":1}"), std::invalid_argument);
    CHECK_THROWS_AS(pipeline_config_from_json("[1,2]"), std::invalid_argument);
    CHECK_THROWS_AS(pipeline_config_from_json_file("/no/such/pipeline.json"),
                    std::runtime_error);
}

TEST_CASE("config validation") {
    fs::path dir = case_dir("validate");
    PipelineConfig ok = lean_config(dir, 100, 1);
    validate_config(ok);

    auto bad = [&](auto tweak) {
        PipelineConfig c = ok;
        tweak(c);
        CHECK_THROWS_AS(validate_config(c), std::invalid_argument);
    };
    bad([](PipelineConfig& c) { c.stages = {"generate", "deploy"}; });
    bad([](PipelineConfig& c) { c.models.clear(); });
    bad([](PipelineConfig& c) { c.models = {"random", "random"}; });
    bad([](PipelineConfig& c) { c.models = {"pca-0"}; });
    bad([](PipelineConfig& c) { c.models = {"pca-x"}; });
    bad([](PipelineConfig& c) { c.models = {"boosted-trees"}; });
    bad([](PipelineConfig& c) { c.train_fraction = 1.0; });
    bad([](PipelineConfig& c) { c.eval_quantile = 0.0; });
    bad([](PipelineConfig& c) { c.reciprocated_buckets = 5; });
    bad([](PipelineConfig& c) { c.slpa_r = 0.0; });
    bad([](PipelineConfig& c) { c.oversample_factor = 1; });
    bad([](PipelineConfig& c) { c.pval_threshold = 0.0; });
    bad([](PipelineConfig& c) { c.ablation_model = "glm-small"; });
    bad([](PipelineConfig& c) { c.importance_model = "random"; });
    bad([](PipelineConfig& c) { c.importance_model = "pca-aggr"; });
    // no data source for stages that need one
    bad([](PipelineConfig& c) {
        c.gen_config.clear();
        c.stages = {"graph"};
    });

    // pca-<k> is generic
    PipelineConfig c7 = ok;
    c7.models = {"pca-7"};
    validate_config(c7);

    // hash ignores placement, not substance
    PipelineConfig moved = ok;
    moved.out_dir = "/somewhere/else";
    moved.threads = 8;
    CHECK(config_hash(moved) == config_hash(ok));
    PipelineConfig reseeded = ok;
    reseeded.seed = ok.seed + 1;
    CHECK(config_hash(reseeded) != config_hash(ok));
}

TEST_CASE("compare_models orders by recall then fall-out then precision") {
    auto row = [](const char* name, double rec, double fo, double prec) {
        ModelEval e;
        e.name = name;
        e.recall = rec;
        e.fall_out = fo;
        e.precision = prec;
        return e;
    };
    std::vector<ModelEval> rows = {
        row("a", 0.5, 0.10, 0.3), row("b", 0.7, 0.10, 0.3), row("c", 0.5, 0.05, 0.3),
        row("d", 0.5, 0.05, 0.4), row("e", 0.5, 0.05, 0.4),
    };
    std::vector<ModelEval> ranked = compare_models(rows);
    std::vector<std::string> names;
    for (const ModelEval& e : ranked) names.push_back(e.name);
    CHECK(names == std::vector<std::string>{"b", "d", "e", "c", "a"});
}

TEST_CASE("generate stage alone writes data and manifest only") {
    fs::path dir = case_dir("genonly");
    PipelineConfig cfg = lean_config(dir, 120, 3);
    cfg.stages = {"generate"};
    PipelineReport rep = run_pipeline(cfg);

    CHECK(rep.stages_run == std::vector<std::string>{"generate"});
    fs::path out = cfg.out_dir;
    CHECK(fs::exists(out / "data" / "events.csv"));
    CHECK(fs::exists(out / "data" / "users.csv"));
    CHECK(fs::exists(out / "data" / "towers.csv"));
    CHECK(fs::exists(out / "data" / "gen_config.json"));
    CHECK(fs::exists(out / "data" / "dataset_config.json"));
    CHECK(fs::exists(out / "manifest.json"));
    CHECK_FALSE(fs::exists(out / "report.json"));
    CHECK_FALSE(fs::exists(out / "models"));
    CHECK(rep.report_path.empty());
    CHECK(rep.comparison.empty());

    json man = json::parse(slurp(out / "manifest.json"));
    CHECK(man["config_hash"] == rep.config_hash);
    CHECK(man["artifacts"].contains("data/events.csv"));
    CHECK(man["artifacts"].size() == rep.artifacts.size());
}

TEST_CASE("identical configs reproduce every artifact byte for byte") {
    fs::path dir = case_dir("determinism");
    write_file(dir / "gen.json", gen_json(200, 11, 1.0, 3.0));

    auto run_into = [&](const std::string& sub) {
        PipelineConfig cfg;
        cfg.gen_config = (dir / "gen.json").string();
        cfg.out_dir = (dir / sub).string();
        cfg.seed = 11;
        cfg.windows_month = false;
        cfg.windows_week = false;
        cfg.windows_day = false;
        cfg.windows_hour = false;
        cfg.slpa_T = 15;
        cfg.centrality_exact_threshold = 800;
        cfg.centrality_samples = 300;
        cfg.lasso_grid_size = 12;
        cfg.lasso_folds = 3;
        cfg.models = {"random", "glm-small", "pca-10", "lasso-logistic"};
        return run_pipeline(cfg);
    };
    PipelineReport a = run_into("a");
    PipelineReport b = run_into("b");

    CHECK(a.config_hash == b.config_hash);
    CHECK(a.artifacts == b.artifacts);
    for (const char* rel : {"report.json", "manifest.json", "features.bin", "features.json",
                            "models/pca-10.json", "models/lasso-logistic_scores.csv",
                            "comparison.csv", "importance.csv"}) {
        CHECK_MESSAGE(slurp(dir / "a" / rel) == slurp(dir / "b" / rel), rel);
    }
}

TEST_CASE("pca with more components than rank completes with a truncation warning") {
    fs::path dir = case_dir("pcabig");
    PipelineConfig cfg = lean_config(dir, 150, 7);
    cfg.models = {"pca-500"};
    PipelineReport rep = run_pipeline(cfg);
    REQUIRE(rep.comparison.size() == 1);

    json report = json::parse(slurp(fs::path(cfg.out_dir) / "report.json"));
    const json& warnings = report["models"]["pca-500"]["warnings"];
    REQUIRE(!warnings.empty());
    bool clamped = false;
    for (const auto& w : warnings)
        if (w.get<std::string>().find("clamped") != std::string::npos) clamped = true;
    CHECK(clamped);
    CHECK(fs::exists(fs::path(cfg.out_dir) / "models" / "pca-500_basis.bin"));
}

TEST_CASE("full ladder on a planted dataset") {
    fs::path dir = case_dir("ladder");
    PipelineConfig cfg = lean_config(dir, 600, 5);
    cfg.models = {"random",        "glm-small",      "pca-10",    "pca-aggr",
                  "pval-05",       "oversampled-2",  "lasso-logistic", "lasso-svm"};
    PipelineReport rep = run_pipeline(cfg);

    CHECK(rep.stages_run.size() == 7);
    REQUIRE(rep.comparison.size() == 8);
    for (size_t i = 1; i < rep.comparison.size(); ++i)
        CHECK(rep.comparison[i - 1].recall >= rep.comparison[i].recall);

    json report = json::parse(slurp(fs::path(cfg.out_dir) / "report.json"));

    // the flagged set is a fixed-size top quantile, so fall-out is bounded for
    // every model
    size_t m_test = report["threshold"]["test_rows"].get<size_t>();
    size_t flagged = report["threshold"]["flagged"].get<size_t>();
    CHECK(flagged == size_t(std::ceil(0.05 * double(m_test) - 1e-9)));
    double bound = report["threshold"]["fall_out_bound"].get<double>();
    for (const ModelEval& e : rep.comparison) {
        CHECK(e.fall_out <= bound + 1e-12);
        CHECK(e.auc >= 0.0);
        CHECK(e.auc <= 1.0);
    }

    // random guesses, planted models do not
    double best_auc = 0.0, random_auc = 0.0;
    for (const ModelEval& e : rep.comparison) {
        best_auc = std::max(best_auc, e.auc);
        if (e.name == "random") random_auc = e.auc;
    }
    CHECK(best_auc > 0.8);
    CHECK(random_auc > 0.25);
    CHECK(random_auc < 0.75);

    CHECK(report.contains("stability"));
    CHECK(report["stability"]["depth"].get<size_t>() == flagged);
    double overlap = report["stability"]["overlap"].get<double>();
    CHECK(overlap >= 0.0);
    CHECK(overlap <= 1.0);

    // ablation: full + one per group + correspondent-only
    REQUIRE(report.contains("ablation"));
    CHECK(report["ablation"]["rows"].size() == 8);
    std::set<std::string> variants;
    for (const auto& r : report["ablation"]["rows"])
        variants.insert(r["variant"].get<std::string>());
    CHECK(variants.count("full") == 1);
    CHECK(variants.count("-CORRESPONDENT") == 1);
    CHECK(variants.count("correspondent-only") == 1);

    REQUIRE(report.contains("importance"));
    CHECK(report["importance"]["model"] == "pca-10");
    CHECK(report["importance"]["sum_d"].get<double>() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(report["importance"]["top"].size() <= 20);
    CHECK(report["importance"].contains("vi_stability"));

    // per-model artifacts all exist
    for (const ModelEval& e : rep.comparison) {
        CHECK(fs::exists(fs::path(cfg.out_dir) / "models" / (e.name + ".json")));
        CHECK(fs::exists(fs::path(cfg.out_dir) / "models" / (e.name + "_scores.csv")));
        CHECK(fs::exists(fs::path(cfg.out_dir) / ("roc_" + e.name + ".csv")));
    }
    CHECK(rep.ablation.size() == 8);
}

TEST_CASE("window toggles prune the matching feature families") {
    fs::path dir = case_dir("windows");
    PipelineConfig cfg = lean_config(dir, 120, 9);
    cfg.stages = {"generate", "features"};
    run_pipeline(cfg);

    json side = json::parse(slurp(fs::path(cfg.out_dir) / "features.json"));
    REQUIRE(side.contains("columns"));
    CHECK(!side["columns"].empty());
    for (const auto& jc : side["columns"]) {
        std::string w = jc["window"].get<std::string>();
        CHECK_MESSAGE((w.empty() || w == "Total"), jc["stat"].get<std::string>() << " " << w);
    }
}

TEST_CASE("staged runs reuse a persisted feature matrix") {
    fs::path dir = case_dir("staged");
    PipelineConfig cfg = lean_config(dir, 250, 13);
    cfg.stages = {"generate", "features"};
    PipelineReport first = run_pipeline(cfg);
    CHECK(first.stages_run == std::vector<std::string>{"generate", "features"});
    CHECK(fs::exists(fs::path(cfg.out_dir) / "features.bin"));

    PipelineConfig second = cfg;
    second.gen_config.clear();
    second.stages = {"train", "evaluate"};
    second.models = {"pca-10", "lasso-logistic"};
    PipelineReport rep = run_pipeline(second);
    CHECK(rep.comparison.size() == 2);

    json report = json::parse(slurp(fs::path(cfg.out_dir) / "report.json"));
    CHECK(report["features"]["loaded_from_disk"] == true);
}

TEST_CASE("a failing model fit halts the train stage and leaves error.json") {
    fs::path dir = case_dir("failure");
    PipelineConfig cfg = lean_config(dir, 150, 17);
    cfg.models = {"pca-10", "pval-05"};
    cfg.pval_threshold = 1e-300;  // retains nothing

    bool threw = false;
    try {
        run_pipeline(cfg);
    } catch (const StageError& e) {
        threw = true;
        CHECK(e.stage == "train");
        CHECK(std::string(e.what()).find("pval-05") != std::string::npos);
    }
    CHECK(threw);
    json err = json::parse(slurp(fs::path(cfg.out_dir) / "error.json"));
    CHECK(err["stage"] == "train");
}

TEST_CASE("cli maps subcommands, overrides, and exit codes") {
    fs::path dir = case_dir("cli");
    write_file(dir / "gen.json", gen_json(100, 23, 1.0, 3.0));
    json pj;
    pj["gen_config"] = (dir / "gen.json").string();
    pj["out_dir"] = (dir / "cli_out").string();
    pj["seed"] = 23;
    for (const char* k : {"windows_month", "windows_week", "windows_day", "windows_dow",
                          "windows_hour", "windows_business", "windows_weekend"})
        pj[k] = false;
    pj["models"] = {"random", "pca-5"};
    write_file(dir / "pipe.json", pj.dump(2));

    CHECK(run_cli("generate --config " + (dir / "pipe.json").string()) == 0);
    CHECK(fs::exists(dir / "cli_out" / "data" / "events.csv"));

    // --out-dir override wins over the config
    CHECK(run_cli("generate --config " + (dir / "pipe.json").string() + " --out-dir " +
                  (dir / "cli_out2").string()) == 0);
    CHECK(fs::exists(dir / "cli_out2" / "data" / "events.csv"));

    write_file(dir / "bad_key.json", "{\"no_such_key\": 1}");
    CHECK(run_cli("run --config " + (dir / "bad_key.json").string()) == 2);

    write_file(dir / "bad_model.json", "{\"models\": [\"boosted-trees\"]}");
    CHECK(run_cli("run --config " + (dir / "bad_model.json").string()) == 2);

    CHECK(run_cli("run --config " + (dir / "missing.json").string()) == 2);
    CHECK(run_cli("run") == 2);
    CHECK(run_cli("") == 2);
    CHECK(run_cli("--help") == 0);

    // evaluate with no trained features and no data source is a config error
    json ev;
    ev["out_dir"] = (dir / "empty_out").string();
    ev["stages"] = {"evaluate"};
    write_file(dir / "eval_only.json", ev.dump(2));
    CHECK(run_cli("run --config " + (dir / "eval_only.json").string()) == 2);

    // a runtime stage failure exits 1
    json fail = pj;
    fail["out_dir"] = (dir / "fail_out").string();
    fail["models"] = {"pval-05"};
    fail["pval_threshold"] = 1e-300;
    write_file(dir / "fail.json", fail.dump(2));
    CHECK(run_cli("run --config " + (dir / "fail.json").string()) == 1);
    CHECK(fs::exists(dir / "fail_out" / "error.json"));
}
