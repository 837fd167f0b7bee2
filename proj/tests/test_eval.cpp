#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdrscope/eval.hpp"
#include "cdrscope/rng.hpp"
#include "cdrscope/stats.hpp"

using namespace cdrscope;

namespace {

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

// dataset carrying only the labels; enough for assembling feature matrices
Dataset label_only_dataset(const std::vector<uint8_t>& y) {
    Dataset ds;
    ds.config.observation_start = 0;
    ds.config.observation_end = 86400;
    for (size_t i = 0; i < y.size(); ++i) {
        ds.user_names.intern("u" + std::to_string(i));
        UserRecord u;
        u.id = NodeId(i);
        u.defaulted = y[i] != 0;
        ds.users.push_back(u);
    }
    ds.n_internal = NodeId(y.size());
    return ds;
}

FeatureColumn make_col(FeatureGroup g, const std::string& stat, std::vector<double> vals) {
    FeatureColumn c;
    c.spec.group = g;
    c.spec.stat = stat;
    c.values = std::move(vals);
    return c;
}

FeatureMatrix build_fm(std::vector<FeatureColumn> cols, const std::vector<uint8_t>& y,
                       const std::vector<NodeId>& train_ids) {
    Dataset ds = label_only_dataset(y);
    return assemble_and_normalize(std::move(cols), ds, train_ids);
}

std::vector<NodeId> id_range(uint32_t lo, uint32_t hi) {  // [lo, hi)
    std::vector<NodeId> ids;
    for (uint32_t u = lo; u < hi; ++u) ids.push_back(u);
    return ids;
}

// plain logistic fit on the train rows, scoring every row
ModelRecipe logistic_recipe() {
    return [](const FeatureMatrix& fm) {
        auto tr = fm.train_rows();
        std::vector<double> xt(tr.size() * fm.p);
        std::vector<uint8_t> yt(tr.size());
        for (size_t i = 0; i < tr.size(); ++i) {
            yt[i] = fm.y[tr[i]];
            for (uint32_t j = 0; j < fm.p; ++j) xt[i * fm.p + j] = fm.at(tr[i], j);
        }
        LogisticModel m = logistic_fit(xt, tr.size(), fm.p, yt);
        FitOutcome out;
        out.scores = logistic_predict(m, fm.x, fm.n);
        out.beta = m.beta;
        out.intercept = m.intercept;
        return out;
    };
}

size_t line_count(const std::string& path, std::string* first = nullptr) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::string line;
    size_t rows = 0;
    while (std::getline(in, line)) {
        if (rows == 0 && first) *first = line;
        ++rows;
    }
    return rows;
}

}  // namespace

// ---------------------------------------------------------------------------
// Confusion metrics

TEST_CASE("confusion: counts and ratios") {
    // 2000 rows: tp 9, fn 1, fp 96, tn 1894
    std::vector<uint8_t> actual, predicted;
    auto add = [&](uint8_t a, uint8_t p, int times) {
        for (int i = 0; i < times; ++i) {
            actual.push_back(a);
            predicted.push_back(p);
        }
    };
    add(1, 1, 9);
    add(1, 0, 1);
    add(0, 1, 96);
    add(0, 0, 1894);

    auto m = confusion_metrics(predicted, actual);
    CHECK(m.counts.tp == 9);
    CHECK(m.counts.fn == 1);
    CHECK(m.counts.fp == 96);
    CHECK(m.counts.tn == 1894);
    CHECK(m.recall == 9.0 / 10.0);
    CHECK(m.fall_out == 96.0 / 1990.0);
    CHECK(m.precision == 9.0 / 105.0);
    CHECK_FALSE(m.no_actual_positives);
    CHECK_FALSE(m.no_predicted_positives);
    CHECK_FALSE(m.no_actual_negatives);
}

TEST_CASE("confusion: perfect prediction") {
    std::vector<uint8_t> y = {1, 0, 1, 0, 0};
    auto m = confusion_metrics(y, y);
    CHECK(m.recall == 1.0);
    CHECK(m.fall_out == 0.0);
    CHECK(m.precision == 1.0);
}

TEST_CASE("confusion: zero-denominator conventions are flagged") {
    std::vector<uint8_t> none = {0, 0, 0};
    std::vector<uint8_t> some = {1, 0, 0};

    auto a = confusion_metrics(some, none);  // no actual positives
    CHECK(a.no_actual_positives);
    CHECK(a.recall == 0.0);

    auto b = confusion_metrics(none, some);  // nothing predicted positive
    CHECK(b.no_predicted_positives);
    CHECK(b.precision == 0.0);

    std::vector<uint8_t> ones = {1, 1, 1};
    auto c = confusion_metrics(some, ones);  // no actual negatives
    CHECK(c.no_actual_negatives);
    CHECK(c.fall_out == 0.0);

    CHECK_THROWS_AS(confusion_metrics(some, {1, 0}), std::invalid_argument);
    CHECK_THROWS_AS(confusion_metrics({}, {}), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// ROC

TEST_CASE("roc: four-point hand curve") {
    std::vector<double> s = {0.9, 0.8, 0.7, 0.6};
    std::vector<uint8_t> y = {1, 0, 1, 0};
    auto roc = roc_curve(s, y);

    CHECK(roc.positives == 2);
    CHECK(roc.negatives == 2);
    REQUIRE(roc.points.size() == 5);
    CHECK(roc.points[0].fpr == 0.0);
    CHECK(roc.points[0].tpr == 0.0);
    CHECK(std::isinf(roc.points[0].threshold));
    CHECK(roc.points[1].fpr == 0.0);
    CHECK(roc.points[1].tpr == 0.5);
    CHECK(roc.points[1].threshold == 0.9);
    CHECK(roc.points[2].fpr == 0.5);
    CHECK(roc.points[2].tpr == 0.5);
    CHECK(roc.points[3].fpr == 0.5);
    CHECK(roc.points[3].tpr == 1.0);
    CHECK(roc.points[4].fpr == 1.0);
    CHECK(roc.points[4].tpr == 1.0);
    CHECK(roc.auc == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("roc: perfect, reversed, and tied scores") {
    std::vector<uint8_t> y = {1, 0, 1, 0, 0, 1};
    std::vector<double> s(y.size());
    for (size_t i = 0; i < y.size(); ++i) s[i] = y[i] ? 2.0 : 1.0;
    CHECK(roc_curve(s, y).auc == doctest::Approx(1.0).epsilon(1e-12));

    for (auto& v : s) v = -v;
    CHECK(roc_curve(s, y).auc == doctest::Approx(0.0).epsilon(1e-12));

    std::vector<double> flat(y.size(), 0.5);
    auto tied = roc_curve(flat, y);
    REQUIRE(tied.points.size() == 2);  // one block, straight diagonal
    CHECK(tied.points[1].fpr == 1.0);
    CHECK(tied.points[1].tpr == 1.0);
    CHECK(tied.auc == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("roc: uninformative scores sit near one half") {
    const size_t n = 10000;
    Rng rng(77);
    std::vector<double> s(n);
    std::vector<uint8_t> y(n);
    for (size_t i = 0; i < n; ++i) {
        s[i] = rng.uniform01();
        y[i] = rng.uniform01() < 0.3 ? 1 : 0;
    }
    auto roc = roc_curve(s, y);
    CHECK(roc.auc > 0.48);
    CHECK(roc.auc < 0.52);
    CHECK(roc.points.back().fpr == 1.0);
    CHECK(roc.points.back().tpr == 1.0);
}

TEST_CASE("roc: input validation") {
    std::vector<uint8_t> ones = {1, 1};
    std::vector<double> s = {0.1, 0.2};
    CHECK_THROWS_AS(roc_curve(s, ones), std::invalid_argument);
    std::vector<uint8_t> zeros = {0, 0};
    CHECK_THROWS_AS(roc_curve(s, zeros), std::invalid_argument);
    CHECK_THROWS_AS(roc_curve({0.5}, {1, 0}), std::invalid_argument);
    std::vector<double> bad = {std::nan(""), 0.2};
    std::vector<uint8_t> y = {1, 0};
    CHECK_THROWS_AS(roc_curve(bad, y), std::invalid_argument);
}

TEST_CASE("roc: monotone score transforms leave the curve unchanged") {
    const size_t n = 500;
    Rng rng(78);
    std::vector<double> s(n);
    std::vector<uint8_t> y(n);
    for (size_t i = 0; i < n; ++i) {
        s[i] = rng.uniform01();
        y[i] = rng.uniform01() < 0.25 ? 1 : 0;
    }
    std::vector<double> t(n);
    for (size_t i = 0; i < n; ++i) t[i] = 3.0 + 2.0 * s[i];

    auto ra = roc_curve(s, y);
    auto rb = roc_curve(t, y);
    CHECK(ra.auc == doctest::Approx(rb.auc).epsilon(1e-12));
    REQUIRE(ra.points.size() == rb.points.size());
    for (size_t i = 0; i < ra.points.size(); ++i) {
        CHECK(ra.points[i].fpr == rb.points[i].fpr);
        CHECK(ra.points[i].tpr == rb.points[i].tpr);
    }
    // the top-quantile flags agree as well
    CHECK(threshold_topquantile(s, 0.9) == threshold_topquantile(t, 0.9));
}

// ---------------------------------------------------------------------------
// Ranking stability

TEST_CASE("stability: identical, swapped, disjoint") {
    std::vector<NodeId> a = {1, 2, 3};
    CHECK(ranking_stability(a, a, 3).overlap == 1.0);
    CHECK(ranking_stability(a, a, 3).aos == 1.0);

    std::vector<NodeId> b = {1, 3, 2};
    auto s = ranking_stability(a, b, 3);
    CHECK(s.overlap == 1.0);
    CHECK(s.aos == doctest::Approx(5.0 / 6.0).epsilon(1e-12));

    std::vector<NodeId> c = {7, 8, 9};
    auto d = ranking_stability(a, c, 3);
    CHECK(d.overlap == 0.0);
    CHECK(d.aos == 0.0);
}

TEST_CASE("stability: symmetric and validated") {
    Rng rng(81);
    std::vector<NodeId> a(30), b(30);
    std::iota(a.begin(), a.end(), 0u);
    std::iota(b.begin(), b.end(), 0u);
    rng.shuffle(a);
    rng.shuffle(b);

    auto ab = ranking_stability(a, b, 10);
    auto ba = ranking_stability(b, a, 10);
    CHECK(ab.overlap == ba.overlap);
    CHECK(ab.aos == ba.aos);

    CHECK_THROWS_AS(ranking_stability(a, b, 0), std::invalid_argument);
    CHECK_THROWS_AS(ranking_stability(a, b, 31), std::invalid_argument);
    std::vector<NodeId> dup = {1, 1, 2};
    CHECK_THROWS_AS(ranking_stability(dup, a, 3), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Scores over a feature matrix

TEST_CASE("test scores and top-quantile confusion") {
    // 10 users, train 0..5, test 6..9
    Rng rng(83);
    std::vector<double> vals(10);
    for (auto& v : vals) v = rng.uniform01();
    std::vector<uint8_t> y = {0, 1, 0, 1, 0, 0, 1, 0, 0, 0};
    auto fm = build_fm({make_col(FeatureGroup::Network, "f", vals)}, y, id_range(0, 6));

    std::vector<double> scores = {0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.9, 0.1, 0.8, 0.2};
    auto ts = test_scores(fm, scores);
    std::vector<double> want = {0.9, 0.1, 0.8, 0.2};
    CHECK(ts == want);

    auto cm = topquantile_confusion(fm, scores, 0.75);  // flags 1 of 4 test rows
    CHECK(cm.counts.tp == 1);
    CHECK(cm.counts.fp == 0);
    CHECK(cm.counts.fn == 0);
    CHECK(cm.counts.tn == 3);
    CHECK(cm.recall == 1.0);
    CHECK(cm.fall_out == 0.0);

    auto cm2 = topquantile_confusion(fm, scores, 0.5);  // flags 2 of 4
    CHECK(cm2.counts.tp == 1);
    CHECK(cm2.counts.fp == 1);
    CHECK(cm2.precision == 0.5);
    CHECK(cm2.fall_out == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    std::vector<double> short_scores(5, 0.0);
    CHECK_THROWS_AS(test_scores(fm, short_scores), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Group ablation

namespace {

// 400 users, 5% positive, one strong correspondent signal plus noise columns
FeatureMatrix ablation_fixture(std::vector<uint8_t>* y_out = nullptr) {
    const size_t n = 400;
    Rng rng(85);
    std::vector<uint8_t> y(n, 0);
    for (size_t i = 0; i < n; ++i) y[i] = (i % 20 == 7) ? 1 : 0;  // 5% in both halves

    std::vector<double> sig(n), noise1(n), noise2(n);
    for (size_t i = 0; i < n; ++i) {
        sig[i] = 4.0 * y[i] + 0.1 * rng.normal();
        noise1[i] = rng.normal();
        noise2[i] = rng.normal();
    }
    std::vector<FeatureColumn> cols;
    cols.push_back(make_col(FeatureGroup::Correspondent, "signal", sig));
    cols.push_back(make_col(FeatureGroup::Consumption, "noiseA", noise1));
    cols.push_back(make_col(FeatureGroup::Network, "noiseB", noise2));
    if (y_out) *y_out = y;
    return build_fm(std::move(cols), y, id_range(0, 200));
}

}  // namespace

TEST_CASE("ablation: removing the signal group costs recall") {
    auto fm = ablation_fixture();
    auto rows = ablate_groups(fm, logistic_recipe(), 0.9);

    REQUIRE(rows.size() == 8);  // full + six groups + correspondent-only
    CHECK(rows[0].variant == "full");
    CHECK(rows[0].columns == fm.p);
    CHECK_FALSE(rows[0].failed);
    CHECK(rows[0].recall == 1.0);  // 20 flagged in the test half, 10 positives

    auto find_row = [&](const std::string& v) -> const AblationRow& {
        for (const auto& r : rows)
            if (r.variant == v) return r;
        REQUIRE_MESSAGE(false, "missing variant " << v);
        return rows[0];
    };

    const auto& no_sig = find_row("-CORRESPONDENT");
    CHECK(no_sig.columns == fm.p - 1);
    CHECK(no_sig.recall < 0.6);
    CHECK(no_sig.delta_recall > 0.4);

    const auto& no_noise = find_row("-CONSUMPTION");
    CHECK(no_noise.recall == 1.0);
    CHECK(no_noise.delta_recall == 0.0);

    // groups with no columns degrade to the full matrix
    const auto& no_mob = find_row("-MOBILITY");
    CHECK(no_mob.columns == fm.p);
    CHECK(no_mob.delta_recall == 0.0);

    const auto& only = find_row("correspondent-only");
    CHECK(only.columns == 1);
    CHECK(only.recall == 1.0);

    // the signal group carries the largest recall drop
    double max_delta = -1.0;
    std::string max_variant;
    for (const auto& r : rows)
        if (r.variant[0] == '-' && r.delta_recall > max_delta) {
            max_delta = r.delta_recall;
            max_variant = r.variant;
        }
    CHECK(max_variant == "-CORRESPONDENT");
}

TEST_CASE("ablation: per-variant failures are captured, not fatal") {
    auto fm = ablation_fixture();
    ModelRecipe picky = [](const FeatureMatrix& sub) {
        if (sub.p < 3) throw std::runtime_error("need at least three columns");
        return logistic_recipe()(sub);
    };
    auto rows = ablate_groups(fm, picky, 0.9);
    REQUIRE(rows.size() == 8);
    CHECK_FALSE(rows[0].failed);

    bool saw_failure = false;
    for (const auto& r : rows) {
        if (!r.failed) continue;
        saw_failure = true;
        CHECK_FALSE(r.error.empty());
        CHECK(std::isnan(r.delta_recall));
        CHECK(std::isnan(r.delta_precision));
    }
    CHECK(saw_failure);
}

TEST_CASE("csv writers: roc and ablation") {
    std::vector<double> s = {0.9, 0.8, 0.7, 0.6};
    std::vector<uint8_t> y = {1, 0, 1, 0};
    auto roc = roc_curve(s, y);
    const std::string rp = "/tmp/cdrscope_test_roc.csv";
    write_roc_csv(roc, rp);
    std::string header;
    CHECK(line_count(rp, &header) == roc.points.size() + 1);
    CHECK(header == "fpr,tpr,threshold");
    std::remove(rp.c_str());

    auto fm = ablation_fixture();
    auto rows = ablate_groups(fm, logistic_recipe(), 0.9);
    const std::string ap = "/tmp/cdrscope_test_ablation.csv";
    write_ablation_csv(rows, ap);
    CHECK(line_count(ap, &header) == rows.size() + 1);
    CHECK(header == "variant,columns,recall,fall_out,precision,delta_recall,delta_precision,error");
    std::remove(ap.c_str());
}

// ---------------------------------------------------------------------------
// Coefficient back-mapping

TEST_CASE("backmap: identity and hand product") {
    PcaBasis ident;
    ident.p = 2;
    ident.p1 = 2;
    ident.c = {1, 0, 0, 1};
    ident.mean = {0, 0};
    std::vector<double> beta = {0.3, -0.7};
    CHECK(backmap_coefficients(ident, beta) == beta);

    PcaBasis one;
    one.p = 2;
    one.p1 = 1;
    one.c = {0.6, 0.8};
    one.mean = {0, 0};
    auto back = backmap_coefficients(one, {2.0});
    REQUIRE(back.size() == 2);
    CHECK(back[0] == doctest::Approx(1.2).epsilon(1e-15));
    CHECK(back[1] == doctest::Approx(1.6).epsilon(1e-15));

    CHECK_THROWS_AS(backmap_coefficients(one, beta), std::invalid_argument);
}

TEST_CASE("backmap: full-rank scores match the original space") {
    const size_t n = 30, p = 4;
    Rng rng(87);
    std::vector<double> x(n * p);
    for (auto& v : x) v = rng.normal();

    PcaBasis b = pca_fit(x, n, p, uint32_t(p));
    REQUIRE(b.p1 == p);
    auto xp = pca_transform(x, n, b);

    std::vector<double> beta_pc = {0.5, -1.0, 0.25, 0.75};
    auto beta = backmap_coefficients(b, beta_pc);

    for (size_t i = 0; i < n; ++i) {
        double s_pc = 0.0, s_orig = 0.0;
        for (size_t k = 0; k < p; ++k) s_pc += xp[i * p + k] * beta_pc[k];
        for (size_t j = 0; j < p; ++j) s_orig += (x[i * p + j] - b.mean[j]) * beta[j];
        CHECK(std::abs(s_pc - s_orig) < 1e-8);
    }
}

// ---------------------------------------------------------------------------
// Contributions

TEST_CASE("contributions: hand-sized table") {
    // standardized columns: a = (1,1,-1,-1), b = (1,-1,1,-1)
    std::vector<uint8_t> y = {1, 1, 0, 0};
    auto fm = build_fm({make_col(FeatureGroup::Network, "a", {1, 1, -1, -1}),
                        make_col(FeatureGroup::Network, "b", {1, -1, 1, -1})},
                       y, id_range(0, 4));
    REQUIRE(fm.p == 2);
    CHECK(fm.at(0, 0) == 1.0);  // already z-scored

    auto t = mean_relative_contribution(fm, {1.0, -2.0}, 0.5);
    REQUIRE(t.names.size() == 2);
    CHECK(t.names[0] == "a");
    CHECK(t.defaulted_mean[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(t.defaulted_mean[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(t.paying_mean[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(t.paying_mean[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(t.defaulted_relative[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(t.defaulted_relative[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(t.score_mean_defaulted == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(t.score_mean_paying == doctest::Approx(-0.5).epsilon(1e-12));

    double sum_def = t.defaulted_relative[0] + t.defaulted_relative[1];
    double sum_pay = t.paying_relative[0] + t.paying_relative[1];
    CHECK(sum_def == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sum_pay == doctest::Approx(1.0).epsilon(1e-12));

    // zero coefficients: zero contributions, relatives stay finite
    auto z = mean_relative_contribution(fm, {0.0, 0.0}, 0.0);
    CHECK(z.defaulted_mean[0] == 0.0);
    CHECK(z.defaulted_relative[0] == 0.0);
    CHECK_FALSE(std::isnan(z.paying_relative[1]));

    CHECK_THROWS_AS(mean_relative_contribution(fm, {1.0}, 0.0), std::invalid_argument);
}

TEST_CASE("contributions: train rows only by default") {
    // the test row is extreme; train-only means must ignore it
    std::vector<uint8_t> y = {1, 1, 0, 0, 1};
    auto fm = build_fm({make_col(FeatureGroup::Network, "a", {1, 1, -1, -1, 500})}, y,
                       id_range(0, 4));
    auto t = mean_relative_contribution(fm, {2.0}, 0.0);
    CHECK(t.defaulted_mean[0] == doctest::Approx(2.0).epsilon(1e-12));
    auto all = mean_relative_contribution(fm, {2.0}, 0.0, false);
    CHECK(all.defaulted_mean[0] > 10.0);
}

// ---------------------------------------------------------------------------
// Pratt importance

TEST_CASE("pratt: algebra and guards") {
    std::vector<double> beta = {2.0, 1.0};
    std::vector<double> rho = {0.3, 0.4};
    double r2 = pratt_r2(beta, rho);
    CHECK(r2 == doctest::Approx(1.0).epsilon(1e-15));
    auto d = pratt_vi(beta, rho, r2);
    CHECK(d[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(d[1] == doctest::Approx(0.4).epsilon(1e-12));

    CHECK_THROWS_AS(pratt_vi(beta, rho, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(pratt_vi(beta, rho, -0.5), std::invalid_argument);
    CHECK_THROWS_AS(pratt_r2({1.0}, rho), std::invalid_argument);
}

TEST_CASE("pratt: symmetric predictors split the importance evenly") {
    const size_t n = 10000;
    Rng rng(91);
    std::vector<double> c1(n), c2(n), c3(n);
    std::vector<uint8_t> y(n);
    for (size_t i = 0; i < n; ++i) {
        c1[i] = rng.normal();
        c2[i] = rng.normal();
        c3[i] = rng.normal();  // no effect on the label
        y[i] = rng.uniform01() < sigmoid(-2.0 + 0.8 * c1[i] + 0.8 * c2[i]) ? 1 : 0;
    }
    auto fm = build_fm({make_col(FeatureGroup::Network, "s1", c1),
                        make_col(FeatureGroup::Network, "s2", c2),
                        make_col(FeatureGroup::Network, "zz", c3)},
                       y, id_range(0, uint32_t(n)));

    auto out = logistic_recipe()(fm);
    auto rho = label_correlations(fm);
    double r2 = pratt_r2(out.beta, rho);
    CHECK(r2 > 0.0);
    auto d = pratt_vi(out.beta, rho, r2);

    CHECK(std::abs(d[0] - 0.5) < 0.05);
    CHECK(std::abs(d[1] - 0.5) < 0.05);
    CHECK(std::abs(d[2]) < 0.02);
    CHECK(d[0] + d[1] + d[2] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("pseudo r2 diagnostics") {
    // intercept-only fit explains nothing in the weighted representation
    const size_t n = 1000;
    std::vector<uint8_t> y(n, 0);
    for (size_t i = 0; i < 300; ++i) y[i] = 1;
    double b0 = std::log(0.3 / 0.7);
    std::vector<double> eta(n, b0);
    CHECK(std::abs(wls_pseudo_r2(eta, y)) < 1e-9);
    CHECK(mckelvey_zavoina_r2(eta) < 1e-12);  // constant score, zero latent variance

    // a strongly separating score explains most of it
    Rng rng(93);
    std::vector<double> x(n);
    std::vector<uint8_t> ys(n);
    for (size_t i = 0; i < n; ++i) {
        x[i] = rng.normal();
        ys[i] = rng.uniform01() < sigmoid(3.0 * x[i]) ? 1 : 0;
    }
    LogisticModel m = logistic_fit(x, n, 1, ys);
    auto sc = logistic_decision(m, x, n);
    double wr2 = wls_pseudo_r2(sc, ys);
    CHECK(wr2 > 0.2);
    CHECK(wr2 < 1.0);

    // latent-variance flavor: var(eta) / (var(eta) + pi^2/3)
    std::vector<double> two = {0.0, 2.0};
    double pi2 = 9.86960440108935861883;
    CHECK(mckelvey_zavoina_r2(two) == doctest::Approx(1.0 / (1.0 + pi2 / 3.0)).epsilon(1e-12));

    std::vector<uint8_t> ones(4, 1);
    std::vector<double> flat(4, 0.2);
    CHECK_THROWS_AS(wls_pseudo_r2(flat, ones), std::invalid_argument);
    CHECK_THROWS_AS(wls_pseudo_r2(flat, {1, 0}), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Importance stability

TEST_CASE("vi stability: dropping the top features hurts recall") {
    const size_t n = 400;
    Rng rng(95);
    std::vector<uint8_t> y(n, 0);
    for (size_t i = 0; i < n; ++i) y[i] = (i % 20 < 1) ? 1 : 0;

    std::vector<double> s1(n), s2(n), n1(n), n2(n), n3(n);
    for (size_t i = 0; i < n; ++i) {
        s1[i] = 3.0 * y[i] + 0.3 * rng.normal();
        s2[i] = 2.5 * y[i] + 0.3 * rng.normal();
        n1[i] = rng.normal();
        n2[i] = rng.normal();
        n3[i] = rng.normal();
    }
    auto fm = build_fm({make_col(FeatureGroup::Correspondent, "sigA", s1),
                        make_col(FeatureGroup::Correspondent, "sigB", s2),
                        make_col(FeatureGroup::Consumption, "nsA", n1),
                        make_col(FeatureGroup::Consumption, "nsB", n2),
                        make_col(FeatureGroup::Network, "nsC", n3)},
                       y, id_range(0, 200));

    auto rep = vi_stability_check(fm, logistic_recipe(), 2, 0.9);
    REQUIRE(rep.removed.size() == 2);
    CHECK(std::find(rep.removed.begin(), rep.removed.end(), "sigA") != rep.removed.end());
    CHECK(std::find(rep.removed.begin(), rep.removed.end(), "sigB") != rep.removed.end());
    CHECK(rep.recall_before == 1.0);
    CHECK(rep.recall_after < rep.recall_before);
    CHECK(rep.delta_recall == rep.recall_before - rep.recall_after);
    CHECK(rep.max_d_before > 0.3);

    auto rep2 = vi_stability_check(fm, logistic_recipe(), 2, 0.9);
    CHECK(rep2.removed == rep.removed);
    CHECK(rep2.recall_after == rep.recall_after);

    CHECK_THROWS_AS(vi_stability_check(fm, logistic_recipe(), 0, 0.9), std::invalid_argument);
    CHECK_THROWS_AS(vi_stability_check(fm, logistic_recipe(), fm.p, 0.9),
                    std::invalid_argument);

    ModelRecipe no_beta = [](const FeatureMatrix& sub) {
        FitOutcome out = logistic_recipe()(sub);
        out.beta.clear();
        return out;
    };
    CHECK_THROWS_AS(vi_stability_check(fm, no_beta, 2, 0.9), std::invalid_argument);
}
