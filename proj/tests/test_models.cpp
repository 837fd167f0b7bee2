#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "cdrscope/models.hpp"
#include "cdrscope/rng.hpp"
#include "cdrscope/stats.hpp"
#include "json.hpp"

using namespace cdrscope;

namespace {

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

// row-major n x p standard normal
std::vector<double> randn_matrix(size_t n, size_t p, uint64_t seed) {
    Rng rng(seed);
    std::vector<double> x(n * p);
    for (auto& v : x) v = rng.normal();
    return x;
}

std::vector<uint8_t> bernoulli_labels(const std::vector<double>& x, size_t n, size_t p,
                                      double b0, const std::vector<double>& beta,
                                      uint64_t seed) {
    Rng rng(seed);
    std::vector<uint8_t> y(n);
    for (size_t i = 0; i < n; ++i) {
        double eta = b0;
        for (size_t j = 0; j < p; ++j) eta += beta[j] * x[i * p + j];
        y[i] = rng.uniform01() < sigmoid(eta) ? 1 : 0;
    }
    return y;
}

double frobenius(const std::vector<double>& v) {
    double s = 0.0;
    for (double t : v) s += t * t;
    return std::sqrt(s);
}

}  // namespace

// ---------------------------------------------------------------------------
// PCA

TEST_CASE("pca: axis-aligned four-point cloud") {
    // points (1,0), (-1,0), (0,0.1), (0,-0.1): covariance diag(0.5, 0.005)
    std::vector<double> x = {1, 0, -1, 0, 0, 0.1, 0, -0.1};
    PcaBasis b = pca_fit(x, 4, 2, 2);

    REQUIRE(b.p == 2);
    REQUIRE(b.p1 == 2);
    CHECK(b.mean[0] == 0.0);
    CHECK(b.mean[1] == 0.0);

    // first component is the x axis, share 0.5 / 0.505
    CHECK(b.explained[0] == doctest::Approx(0.5 / 0.505).epsilon(1e-12));
    CHECK(b.explained[1] == doctest::Approx(0.005 / 0.505).epsilon(1e-12));
    CHECK(std::abs(b.loading(0, 0) - 1.0) < 1e-12);
    CHECK(std::abs(b.loading(1, 0)) < 1e-12);
    CHECK(std::abs(b.loading(0, 1)) < 1e-12);
    CHECK(std::abs(b.loading(1, 1) - 1.0) < 1e-12);
    CHECK_FALSE(b.truncated);

    auto xp = pca_transform(x, 4, b);
    REQUIRE(xp.size() == 8);
    CHECK(xp[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(xp[1]) < 1e-12);
    CHECK(xp[5] == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("pca: duplicated column collapses to one component") {
    std::vector<double> x;
    for (int i = 0; i < 6; ++i) {
        x.push_back(double(i));
        x.push_back(double(i));
    }
    PcaBasis b = pca_fit(x, 6, 2, 2);
    CHECK(b.requested == 2);
    CHECK(b.p1 == 1);
    CHECK(b.truncated);
    CHECK_FALSE(b.warnings.empty());
    CHECK(b.explained[0] == doctest::Approx(1.0).epsilon(1e-12));
    // equal loadings on both copies
    CHECK(b.loading(0, 0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-9));
    CHECK(b.loading(1, 0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-9));
}

TEST_CASE("pca: orthonormal loadings, exact reconstruction at full rank") {
    const size_t n = 40, p = 12;
    auto x = randn_matrix(n, p, 7);
    PcaBasis b = pca_fit(x, n, p, uint32_t(p));
    REQUIRE(b.p1 == p);

    for (size_t a = 0; a < p; ++a)
        for (size_t c = 0; c < p; ++c) {
            double dot = 0.0;
            for (size_t r = 0; r < p; ++r)
                dot += b.loading(uint32_t(r), uint32_t(a)) * b.loading(uint32_t(r), uint32_t(c));
            CHECK(std::abs(dot - (a == c ? 1.0 : 0.0)) < 1e-8);
        }

    double share_sum = std::accumulate(b.explained.begin(), b.explained.end(), 0.0);
    CHECK(share_sum == doctest::Approx(1.0).epsilon(1e-9));
    for (size_t k = 1; k < b.explained.size(); ++k)
        CHECK(b.explained[k] <= b.explained[k - 1] + 1e-12);

    // X_PC * C^T + mean recovers X
    auto xp = pca_transform(x, n, b);
    std::vector<double> diff(n * p);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < p; ++j) {
            double rec = b.mean[j];
            for (size_t k = 0; k < b.p1; ++k)
                rec += xp[i * b.p1 + k] * b.loading(uint32_t(j), uint32_t(k));
            diff[i * p + j] = rec - x[i * p + j];
        }
    CHECK(frobenius(diff) / frobenius(x) < 1e-6);
}

TEST_CASE("pca: randomized path agrees with the dense spectrum") {
    const size_t n = 80, p = 25;
    auto x = randn_matrix(n, p, 21);
    // geometric spread of column scales separates the spectrum
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < p; ++j) x[i * p + j] *= std::pow(2.0, -double(j) / 2.0);

    PcaBasis dense = pca_fit(x, n, p, 4);
    PcaOptions ro;
    ro.dense_limit = 1;  // force the randomized path
    ro.seed = 11;
    PcaBasis rnd = pca_fit(x, n, p, 4, ro);

    REQUIRE(rnd.p1 == dense.p1);
    for (uint32_t k = 0; k < dense.p1; ++k) {
        CHECK(rnd.explained[k] ==
              doctest::Approx(dense.explained[k]).epsilon(1e-8));
        double dot = 0.0;
        for (uint32_t r = 0; r < p; ++r) dot += rnd.loading(r, k) * dense.loading(r, k);
        CHECK(dot > 1.0 - 1e-8);  // sign fixing makes the dot positive
    }

    PcaBasis rnd2 = pca_fit(x, n, p, 4, ro);
    CHECK(rnd2.c == rnd.c);
    CHECK(rnd2.explained == rnd.explained);
}

TEST_CASE("pca: input validation") {
    auto x = randn_matrix(5, 3, 1);
    CHECK_THROWS_AS(pca_fit(x, 5, 3, 0), std::invalid_argument);
    CHECK_THROWS_AS(pca_fit(x, 5, 3, 4), std::invalid_argument);
    CHECK_THROWS_AS(pca_fit(x, 6, 3, 2), std::invalid_argument);  // storage mismatch
    std::vector<double> flat(12, 3.25);
    CHECK_THROWS_AS(pca_fit(flat, 4, 3, 2), std::invalid_argument);  // constant input
    // p1 capped by row count as well
    auto wide = randn_matrix(3, 5, 2);
    CHECK_THROWS_AS(pca_fit(wide, 3, 5, 4), std::invalid_argument);
}

TEST_CASE("pca: basis file round trip") {
    auto x = randn_matrix(30, 6, 13);
    PcaBasis b = pca_fit(x, 30, 6, 3);
    const std::string path = "/tmp/cdrscope_test_basis.bin";
    save_pca_basis(b, path);
    PcaBasis r = load_pca_basis(path);
    CHECK(r.p == b.p);
    CHECK(r.p1 == b.p1);
    CHECK(r.requested == b.requested);
    CHECK(r.truncated == b.truncated);
    CHECK(r.mean == b.mean);
    CHECK(r.c == b.c);
    CHECK(r.explained == b.explained);
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_pca_basis(path), std::runtime_error);

    const std::string junk = "/tmp/cdrscope_test_basis_junk.bin";
    FILE* f = std::fopen(junk.c_str(), "wb");
    REQUIRE(f != nullptr);
    std::fputs("not a basis", f);
    std::fclose(f);
    CHECK_THROWS_AS(load_pca_basis(junk), std::runtime_error);
    std::remove(junk.c_str());
}

// ---------------------------------------------------------------------------
// Logistic regression

TEST_CASE("logistic: prediction formula") {
    LogisticModel m;
    m.intercept = 0.0;
    m.beta = {0.0};
    std::vector<double> x = {5.0};
    CHECK(logistic_predict(m, x, 1)[0] == doctest::Approx(0.5).epsilon(1e-15));

    m.intercept = std::log(3.0);
    CHECK(logistic_predict(m, x, 1)[0] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(logistic_decision(m, x, 1)[0] == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("logistic: recovers planted coefficients") {
    const size_t n = 10000;
    auto x = randn_matrix(n, 1, 5);
    auto y = bernoulli_labels(x, n, 1, -2.0, {1.0}, 6);

    LogisticModel m = logistic_fit(x, n, 1, y);
    CHECK(m.converged);
    CHECK(m.grad_norm < 1e-8);
    CHECK_FALSE(m.separation_suspected);
    CHECK(std::abs(m.intercept - (-2.0)) < 0.1);
    CHECK(std::abs(m.beta[0] - 1.0) < 0.1);
    CHECK(m.se[0] > 0.0);
    CHECK(m.intercept_se > 0.0);
    CHECK(m.p_value[0] < 1e-6);
    CHECK(m.intercept_p < 1e-6);

    // with an intercept the mean fitted probability matches the base rate
    auto ph = logistic_predict(m, x, n);
    double base = 0.0;
    for (uint8_t v : y) base += v;
    base /= double(n);
    CHECK(mean_of(ph) == doctest::Approx(base).epsilon(1e-6));
}

TEST_CASE("logistic: gradient matches central finite differences") {
    const size_t n = 60, p = 3;
    auto x = randn_matrix(n, p, 9);
    auto y = bernoulli_labels(x, n, p, 0.3, {0.5, -1.0, 0.25}, 10);

    Rng rng(11);
    const double h = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
        double b0 = rng.normal();
        std::vector<double> beta(p);
        for (auto& b : beta) b = rng.normal();

        auto g = logistic_gradient(x, n, p, y, b0, beta);
        REQUIRE(g.size() == p + 1);

        auto fd = [&](int slot) {
            double lo, hi;
            if (slot == 0) {
                hi = logistic_loglik(x, n, p, y, b0 + h, beta);
                lo = logistic_loglik(x, n, p, y, b0 - h, beta);
            } else {
                auto bp = beta, bm = beta;
                bp[slot - 1] += h;
                bm[slot - 1] -= h;
                hi = logistic_loglik(x, n, p, y, b0, bp);
                lo = logistic_loglik(x, n, p, y, b0, bm);
            }
            return (hi - lo) / (2.0 * h);
        };
        for (int s = 0; s <= int(p); ++s) {
            double num = fd(s);
            CHECK(std::abs(g[s] - num) <= 1e-5 * std::max(1.0, std::abs(g[s])));
        }
    }
}

TEST_CASE("logistic: solver reaches a stationary point of the mean log-likelihood") {
    const size_t n = 500, p = 2;
    auto x = randn_matrix(n, p, 14);
    auto y = bernoulli_labels(x, n, p, -0.5, {1.0, -0.7}, 15);
    LogisticModel m = logistic_fit(x, n, p, y);
    REQUIRE(m.converged);
    auto g = logistic_gradient(x, n, p, y, m.intercept, m.beta);
    for (double v : g) CHECK(std::abs(v) < 1e-6);  // ridge offset stays tiny
}

TEST_CASE("logistic: column rescaling leaves probabilities unchanged") {
    const size_t n = 300, p = 2;
    auto x = randn_matrix(n, p, 17);
    auto y = bernoulli_labels(x, n, p, 0.2, {0.8, -0.5}, 18);
    LogisticModel m1 = logistic_fit(x, n, p, y);

    auto xs = x;
    for (size_t i = 0; i < n; ++i) xs[i * p] *= 7.3;
    LogisticModel m2 = logistic_fit(xs, n, p, y);

    auto p1 = logistic_predict(m1, x, n);
    auto p2 = logistic_predict(m2, xs, n);
    for (size_t i = 0; i < n; ++i) CHECK(std::abs(p1[i] - p2[i]) < 1e-6);
    CHECK(m2.beta[0] == doctest::Approx(m1.beta[0] / 7.3).epsilon(1e-5));
}

TEST_CASE("logistic: separable data converges finite and is flagged") {
    std::vector<double> x;
    std::vector<uint8_t> y;
    for (int i = 0; i < 10; ++i) {
        x.push_back(1.0);
        y.push_back(1);
        x.push_back(-1.0);
        y.push_back(0);
    }
    LogisticModel m = logistic_fit(x, 20, 1, y);
    CHECK(m.converged);
    CHECK(m.separation_suspected);
    CHECK(std::isfinite(m.beta[0]));
    CHECK(std::isfinite(m.intercept));
    CHECK(m.beta[0] > 5.0);
    auto ph = logistic_predict(m, x, 20);
    CHECK(ph[0] > 0.99);
    CHECK(ph[1] < 0.01);
}

TEST_CASE("logistic: input validation") {
    std::vector<double> x = {1.0, 2.0};
    std::vector<uint8_t> y = {1, 0};
    CHECK_THROWS_AS(logistic_fit(x, 2, 2, y), std::invalid_argument);   // storage
    CHECK_THROWS_AS(logistic_fit(x, 2, 1, {1}), std::invalid_argument);  // label count
    CHECK_THROWS_AS(logistic_loglik(x, 2, 1, {1, 0}, 0.0, {1.0, 2.0}),
                    std::invalid_argument);  // beta size
}

// ---------------------------------------------------------------------------
// p-value filter

TEST_CASE("pvalue filter: keeps informative columns and refits") {
    const size_t n = 400, p = 3;
    auto x = randn_matrix(n, p, 23);
    auto y = bernoulli_labels(x, n, p, -0.3, {1.5, -1.5, 0.0}, 24);
    LogisticModel full = logistic_fit(x, n, p, y);

    auto res = filter_by_pvalue(x, n, p, y, full);
    CHECK(std::find(res.kept.begin(), res.kept.end(), 0u) != res.kept.end());
    CHECK(std::find(res.kept.begin(), res.kept.end(), 1u) != res.kept.end());
    CHECK(res.model.beta.size() == res.kept.size());
    CHECK(res.model.converged);

    // keep everything at threshold 1, lose everything at an absurd one
    auto all = filter_by_pvalue(x, n, p, y, full, 1.0);
    CHECK(all.kept.size() == p);
    CHECK_THROWS_AS(filter_by_pvalue(x, n, p, y, full, 1e-300), std::invalid_argument);

    LogisticModel bad;
    CHECK_THROWS_AS(filter_by_pvalue(x, n, p, y, bad), std::invalid_argument);
}

TEST_CASE("pvalue filter: excludes a pure-noise column about half the time") {
    // under the null the Wald p-value is asymptotically uniform, so
    // p >= 0.5 should happen in about half the replicates
    const size_t n = 500;
    int excluded = 0;
    const int reps = 200;
    for (int r = 0; r < reps; ++r) {
        Rng rng(Rng::derive(404, uint64_t(r)).next_u64());
        std::vector<double> x(n * 2);
        std::vector<uint8_t> y(n);
        for (size_t i = 0; i < n; ++i) {
            x[i * 2] = rng.normal();
            x[i * 2 + 1] = rng.normal();
            y[i] = rng.uniform01() < sigmoid(-1.0 + 1.2 * x[i * 2]) ? 1 : 0;
        }
        LogisticModel full = logistic_fit(x, n, 2, y);
        if (!(full.p_value[1] < 0.5)) ++excluded;
    }
    double rate = double(excluded) / reps;
    CHECK(rate >= 0.4);
    CHECK(rate <= 0.6);
}

// ---------------------------------------------------------------------------
// Oversampling

TEST_CASE("oversample: duplicates positive rows in order") {
    std::vector<double> x = {
        0, 1,   // r0, negative
        2, 3,   // r1, positive
        4, 5,   // r2, negative
        6, 7,   // r3, positive
    };
    std::vector<uint8_t> y = {0, 1, 0, 1};
    auto out = oversample(x, 4, 2, y, 3);
    REQUIRE(out.n == 8);  // 4 originals + 2 extra copies of each positive
    std::vector<double> want = {0, 1, 2, 3, 4, 5, 6, 7, 2, 3, 6, 7, 2, 3, 6, 7};
    CHECK(out.x == want);
    std::vector<uint8_t> want_y = {0, 1, 0, 1, 1, 1, 1, 1};
    CHECK(out.y == want_y);

    CHECK_THROWS_AS(oversample(x, 4, 2, y, 1), std::invalid_argument);
    std::vector<uint8_t> zeros = {0, 0, 0, 0};
    CHECK_THROWS_AS(oversample(x, 4, 2, zeros, 2), std::invalid_argument);
}

TEST_CASE("oversample: raises the fitted intercept") {
    const size_t n = 400;
    auto x = randn_matrix(n, 1, 31);
    auto y = bernoulli_labels(x, n, 1, -2.2, {0.8}, 32);
    LogisticModel base = logistic_fit(x, n, 1, y);

    auto over = oversample(x, n, 1, y, 3);
    LogisticModel boosted = logistic_fit(over.x, over.n, 1, over.y);
    CHECK(boosted.intercept > base.intercept);
}

// ---------------------------------------------------------------------------
// Lasso

TEST_CASE("lasso: full shrinkage leaves the base-rate intercept") {
    const size_t n = 120, p = 4;
    auto x = randn_matrix(n, p, 41);
    auto y = bernoulli_labels(x, n, p, -1.0, {0.3, -0.2, 0.1, 0.0}, 42);

    LassoOptions opt;
    opt.lambda_grid = {10.0};
    auto m = lasso_logistic_fit(x, n, p, y, opt);
    CHECK(m.all_zero);
    CHECK(m.support.empty());
    CHECK_FALSE(m.warnings.empty());
    CHECK(m.lambda == 10.0);

    double base = 0.0;
    for (uint8_t v : y) base += v;
    base /= double(n);
    CHECK(m.intercept == doctest::Approx(std::log(base / (1.0 - base))).epsilon(1e-6));
}

TEST_CASE("lasso: zero penalty matches the dense logistic fit") {
    const size_t n = 200, p = 3;
    auto x = randn_matrix(n, p, 43);
    auto y = bernoulli_labels(x, n, p, -0.4, {1.0, -0.6, 0.3}, 44);

    LassoOptions opt;
    opt.lambda_grid = {0.0};
    opt.folds = 3;
    auto m = lasso_logistic_fit(x, n, p, y, opt);
    LogisticModel dense = logistic_fit(x, n, p, y);

    CHECK(std::abs(m.intercept - dense.intercept) < 1e-4);
    for (size_t j = 0; j < p; ++j) CHECK(std::abs(m.w[j] - dense.beta[j]) < 1e-4);
}

TEST_CASE("lasso: finds a planted predictor among noise") {
    const size_t n = 300, p = 21;
    auto x = randn_matrix(n, p, 45);
    std::vector<double> beta(p, 0.0);
    beta[0] = 2.0;
    auto y = bernoulli_labels(x, n, p, -1.0, beta, 46);

    LassoOptions opt;
    opt.seed = 3;
    auto m = lasso_logistic_fit(x, n, p, y, opt);

    CHECK_FALSE(m.all_zero);
    CHECK(std::find(m.support.begin(), m.support.end(), 0u) != m.support.end());
    CHECK(m.w[0] > 0.0);
    CHECK(m.folds_used == 5);
    REQUIRE(m.grid.size() == 30);
    REQUIRE(m.cv_auc.size() == 30);
    REQUIRE(m.path_support.size() == 30);

    // grid descends; support grows as the penalty relaxes
    for (size_t i = 1; i < m.grid.size(); ++i) CHECK(m.grid[i] < m.grid[i - 1]);
    for (size_t i = 1; i < m.path_support.size(); ++i)
        CHECK(m.path_support[i] >= m.path_support[i - 1]);

    // the selected penalty carries the best mean AUC
    auto it = std::find(m.grid.begin(), m.grid.end(), m.lambda);
    REQUIRE(it != m.grid.end());
    size_t sel = size_t(it - m.grid.begin());
    double best = *std::max_element(m.cv_auc.begin(), m.cv_auc.end());
    CHECK(m.cv_auc[sel] == doctest::Approx(best).epsilon(1e-12));

    // the strong single predictor should cross-validate well
    CHECK(best > 0.7);
}

TEST_CASE("lasso: deterministic across identical calls") {
    const size_t n = 150, p = 6;
    auto x = randn_matrix(n, p, 47);
    auto y = bernoulli_labels(x, n, p, -0.8, {1.0, 0, 0, -0.5, 0, 0}, 48);
    LassoOptions opt;
    opt.seed = 9;
    auto a = lasso_logistic_fit(x, n, p, y, opt);
    auto b = lasso_logistic_fit(x, n, p, y, opt);
    CHECK(a.w == b.w);
    CHECK(a.intercept == b.intercept);
    CHECK(a.cv_auc == b.cv_auc);
    CHECK(a.grid == b.grid);
    CHECK(a.lambda == b.lambda);
}

TEST_CASE("lasso: input validation") {
    auto x = randn_matrix(20, 2, 49);
    std::vector<uint8_t> y(20, 0);
    for (size_t i = 0; i < 10; ++i) y[i] = 1;

    LassoOptions opt;
    opt.folds = 1;
    CHECK_THROWS_AS(lasso_logistic_fit(x, 20, 2, y, opt), std::invalid_argument);

    std::vector<uint8_t> ones(20, 1);
    CHECK_THROWS_AS(lasso_logistic_fit(x, 20, 2, ones), std::invalid_argument);

    LassoOptions asc;
    asc.lambda_grid = {0.1, 1.0};
    CHECK_THROWS_AS(lasso_logistic_fit(x, 20, 2, y, asc), std::invalid_argument);

    LassoOptions neg;
    neg.lambda_grid = {-0.5};
    CHECK_THROWS_AS(lasso_logistic_fit(x, 20, 2, y, neg), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Linear SVM

namespace {

// two clearly separated clouds on the first axis
void svm_clouds(std::vector<double>& x, std::vector<uint8_t>& y, uint64_t seed) {
    Rng rng(seed);
    for (int i = 0; i < 15; ++i) {
        x.push_back(2.0 + 0.2 * rng.normal());
        x.push_back(0.2 * rng.normal());
        y.push_back(1);
        x.push_back(-2.0 + 0.2 * rng.normal());
        x.push_back(0.2 * rng.normal());
        y.push_back(0);
    }
}

}  // namespace

TEST_CASE("svm: separates a linearly separable cloud") {
    std::vector<double> x;
    std::vector<uint8_t> y;
    svm_clouds(x, y, 51);
    const size_t n = y.size();

    SvmOptions opt;
    opt.reg = 1e-2;
    opt.epochs = 20000;
    auto m = linear_svm_fit(x, n, 2, y, opt);
    CHECK(m.kind == "linear-svm");
    CHECK(m.lambda == 1e-2);

    auto d = linear_decision(m, x, n);
    for (size_t i = 0; i < n; ++i) {
        if (y[i])
            CHECK(d[i] > 0.0);
        else
            CHECK(d[i] < 0.0);
    }
    CHECK(hinge_loss(m, x, n, y) < 0.05);
}

TEST_CASE("svm: label flip negates the decision values") {
    std::vector<double> x;
    std::vector<uint8_t> y;
    svm_clouds(x, y, 52);
    const size_t n = y.size();

    auto yf = y;
    for (auto& v : yf) v = v ? 0 : 1;

    SvmOptions opt;
    auto a = linear_svm_fit(x, n, 2, y, opt);
    auto b = linear_svm_fit(x, n, 2, yf, opt);
    auto da = linear_decision(a, x, n);
    auto db = linear_decision(b, x, n);
    for (size_t i = 0; i < n; ++i) CHECK(std::abs(da[i] + db[i]) < 1e-12);
}

TEST_CASE("svm: deterministic and validated") {
    std::vector<double> x;
    std::vector<uint8_t> y;
    svm_clouds(x, y, 53);
    const size_t n = y.size();

    auto a = linear_svm_fit(x, n, 2, y);
    auto b = linear_svm_fit(x, n, 2, y);
    CHECK(a.w == b.w);
    CHECK(a.intercept == b.intercept);

    SvmOptions bad;
    bad.reg = 0.0;
    CHECK_THROWS_AS(linear_svm_fit(x, n, 2, y, bad), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Quantile threshold

TEST_CASE("threshold: exact counts at the default quantile") {
    // 100 rows: exactly 5 flagged, the 5 largest scores
    Rng rng(61);
    std::vector<double> scores(100);
    std::iota(scores.begin(), scores.end(), 0.0);
    rng.shuffle(scores);
    auto lab = threshold_topquantile(scores, 0.95);
    REQUIRE(lab.size() == 100);
    int flagged = 0;
    for (size_t i = 0; i < lab.size(); ++i) {
        flagged += lab[i];
        if (lab[i]) CHECK(scores[i] >= 95.0);
    }
    CHECK(flagged == 5);

    // (1 - 0.95) * 2000 lands just above 100 in floating point; the count
    // must still be exactly 100
    std::vector<double> big(2000);
    std::iota(big.begin(), big.end(), 0.0);
    auto lab2 = threshold_topquantile(big, 0.95);
    CHECK(std::accumulate(lab2.begin(), lab2.end(), 0) == 100);
}

TEST_CASE("threshold: ceil and tie behavior") {
    std::vector<double> seven = {1, 2, 3, 4, 5, 6, 7};
    auto lab = threshold_topquantile(seven, 0.5);  // ceil(3.5) = 4
    CHECK(std::accumulate(lab.begin(), lab.end(), 0) == 4);
    CHECK(lab[6] == 1);
    CHECK(lab[3] == 1);
    CHECK(lab[2] == 0);

    // ties break toward the lower index
    std::vector<double> flat(10, 1.0);
    auto lf = threshold_topquantile(flat, 0.7);  // ceil(3) = 3
    std::vector<uint8_t> want = {1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
    CHECK(lf == want);

    // never fewer than one positive
    std::vector<double> three = {5.0, 9.0, 1.0};
    auto l3 = threshold_topquantile(three, 0.999);
    CHECK(std::accumulate(l3.begin(), l3.end(), 0) == 1);
    CHECK(l3[1] == 1);
}

TEST_CASE("threshold: input validation") {
    std::vector<double> empty;
    CHECK_THROWS_AS(threshold_topquantile(empty, 0.95), std::invalid_argument);
    std::vector<double> ok = {1.0, 2.0};
    CHECK_THROWS_AS(threshold_topquantile(ok, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(threshold_topquantile(ok, 1.0), std::invalid_argument);
    std::vector<double> bad = {1.0, std::nan("")};
    CHECK_THROWS_AS(threshold_topquantile(bad, 0.5), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Serialization

TEST_CASE("model json captures the fit") {
    const size_t n = 100, p = 2;
    auto x = randn_matrix(n, p, 71);
    auto y = bernoulli_labels(x, n, p, -0.5, {1.0, 0.0}, 72);

    LogisticModel lm = logistic_fit(x, n, p, y);
    auto j = nlohmann::json::parse(model_json(lm));
    CHECK(j["kind"] == "logistic");
    CHECK(j["beta"].size() == p);
    CHECK(j["converged"].get<bool>() == lm.converged);
    CHECK(j["intercept"].get<double>() == doctest::Approx(lm.intercept));

    LassoOptions opt;
    opt.lambda_grid = {0.05, 0.01};
    opt.folds = 3;
    auto sm = lasso_logistic_fit(x, n, p, y, opt);
    auto js = nlohmann::json::parse(model_json(sm));
    CHECK(js["kind"] == "lasso-logistic");
    CHECK(js["grid"].size() == 2);
    CHECK(js["lambda"].get<double>() == sm.lambda);

    PcaBasis b = pca_fit(x, n, p, 2);
    auto jb = nlohmann::json::parse(basis_json(b));
    CHECK(jb["kind"] == "pca");
    CHECK(jb["p"].get<uint32_t>() == 2);
    CHECK(jb["explained"].size() == b.p1);
    CHECK_FALSE(jb.contains("c"));  // the matrix travels in the binary artifact
}
