#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cdrscope {

// ---------------------------------------------------------------------------
// Principal components

struct PcaOptions {
    // Covariance eigendecomposition up to this many columns; a seeded
    // randomized subspace iteration extracts the leading components above it.
    uint32_t dense_limit = 2000;
    uint32_t power_iters = 8;
    uint32_t probe_extra = 10;  // oversampling columns for the randomized path
    uint64_t seed = 1;
};

struct PcaBasis {
    uint32_t p = 0;                 // input columns
    uint32_t p1 = 0;                // retained components
    uint32_t requested = 0;         // what the caller asked for
    std::vector<double> mean;       // fit-time column means, length p
    std::vector<double> c;          // loadings, row-major p x p1, orthonormal columns
    std::vector<double> explained;  // variance shares, non-increasing, length p1
    bool truncated = false;         // requested count exceeded the numerical rank
    std::vector<std::string> warnings;

    double loading(uint32_t row, uint32_t comp) const {
        return c[size_t(row) * p1 + comp];
    }
};

// Components of the covariance of the given rows, sign-fixed so each
// component's largest-magnitude loading is positive. Centers internally;
// pass train rows only.
PcaBasis pca_fit(const std::vector<double>& x, size_t n, size_t p, uint32_t p1,
                 const PcaOptions& opt = {});

// (x - mean) * C for each row; x is row-major with basis.p columns.
std::vector<double> pca_transform(const std::vector<double>& x, size_t n,
                                  const PcaBasis& basis);

void save_pca_basis(const PcaBasis& basis, const std::string& path);
PcaBasis load_pca_basis(const std::string& path);

// ---------------------------------------------------------------------------
// Logistic regression

struct LogisticOptions {
    uint32_t max_iters = 100;
    double grad_tol = 1e-8;  // max-norm of the penalized gradient
    // Jitter on the Hessian diagonal, with the matching quadratic penalty on
    // the non-intercept coefficients so separable data still converges to a
    // finite optimum.
    double ridge = 1e-6;
};

struct LogisticModel {
    double intercept = 0.0;
    std::vector<double> beta;
    double intercept_se = 0.0;
    std::vector<double> se;
    double intercept_p = 1.0;
    std::vector<double> p_value;  // two-sided Wald
    bool converged = false;
    uint32_t iters = 0;
    double grad_norm = 0.0;  // max-norm at exit
    bool separation_suspected = false;
};

LogisticModel logistic_fit(const std::vector<double>& x, size_t n, size_t p,
                           const std::vector<uint8_t>& y,
                           const LogisticOptions& opt = {});

// P(y=1 | row) per row.
std::vector<double> logistic_predict(const LogisticModel& m, const std::vector<double>& x,
                                     size_t n);
// Linear scores (log-odds) per row.
std::vector<double> logistic_decision(const LogisticModel& m, const std::vector<double>& x,
                                      size_t n);

// Mean log-likelihood and its gradient (element 0 is the intercept slot).
// These are the quantities the solver drives to a stationary point, exposed
// so finite-difference checks can run against them.
double logistic_loglik(const std::vector<double>& x, size_t n, size_t p,
                       const std::vector<uint8_t>& y, double intercept,
                       const std::vector<double>& beta);
std::vector<double> logistic_gradient(const std::vector<double>& x, size_t n, size_t p,
                                      const std::vector<uint8_t>& y, double intercept,
                                      const std::vector<double>& beta);

struct PvalueFilterResult {
    std::vector<uint32_t> kept;  // column indices into the input matrix
    LogisticModel model;         // refit on the kept columns
};

// Keeps columns whose Wald p-value is strictly below the threshold and
// refits. Throws if nothing survives.
PvalueFilterResult filter_by_pvalue(const std::vector<double>& x, size_t n, size_t p,
                                    const std::vector<uint8_t>& y,
                                    const LogisticModel& full, double threshold = 0.5,
                                    const LogisticOptions& opt = {});

struct OversampledData {
    std::vector<double> x;
    std::vector<uint8_t> y;
    size_t n = 0;
};

// Originals first, then factor-1 extra copies of every positive row.
OversampledData oversample(const std::vector<double>& x, size_t n, size_t p,
                           const std::vector<uint8_t>& y, uint32_t factor);

// ---------------------------------------------------------------------------
// Sparse linear models

struct LassoOptions {
    // Non-negative, strictly descending. Empty picks a geometric grid from
    // the smallest all-zero penalty down by grid_ratio.
    std::vector<double> lambda_grid;
    uint32_t grid_size = 30;
    double grid_ratio = 1e-3;
    uint32_t folds = 5;
    uint64_t seed = 1;
    uint32_t max_sweeps = 1000;   // coordinate-descent sweeps per reweighting
    uint32_t max_reweights = 50;  // outer quadratic approximations per lambda
    double tol = 1e-7;
};

struct SparseLinearModel {
    std::string kind;  // "lasso-logistic" or "linear-svm"
    double intercept = 0.0;
    std::vector<double> w;
    std::vector<uint32_t> support;  // indices with nonzero weight
    double lambda = 0.0;            // selected penalty (lasso) / L2 weight (svm)
    bool all_zero = false;
    std::vector<double> grid;            // evaluated penalty grid (lasso)
    std::vector<double> cv_auc;          // mean validation AUC per grid point
    std::vector<uint32_t> path_support;  // full-data support size per grid point
    uint32_t folds_used = 0;
    bool converged = true;
    std::vector<std::string> warnings;
};

// L1-penalized logistic regression by cyclic coordinate descent with warm
// starts along the grid; the penalty is chosen by mean held-out AUC over
// seeded stratified folds.
SparseLinearModel lasso_logistic_fit(const std::vector<double>& x, size_t n, size_t p,
                                     const std::vector<uint8_t>& y,
                                     const LassoOptions& opt = {});

struct SvmOptions {
    double reg = 1e-3;       // L2 penalty weight
    uint32_t epochs = 2000;  // full-batch subgradient steps
    double lr0 = 1.0;        // initial step; decays as lr0 / (1 + reg*lr0*t)
    uint64_t seed = 1;       // recorded only; the solver is deterministic
};

// L2-regularized hinge loss, full-batch subgradient descent on a fixed
// schedule. Decision values rank rows; no probability calibration.
SparseLinearModel linear_svm_fit(const std::vector<double>& x, size_t n, size_t p,
                                 const std::vector<uint8_t>& y, const SvmOptions& opt = {});

// w . row + intercept per row.
std::vector<double> linear_decision(const SparseLinearModel& m, const std::vector<double>& x,
                                    size_t n);

// Mean hinge loss at the model's weights (diagnostic).
double hinge_loss(const SparseLinearModel& m, const std::vector<double>& x, size_t n,
                  const std::vector<uint8_t>& y);

// ---------------------------------------------------------------------------
// Percentile thresholding

// Positive labels for exactly ceil((1-q)*m) of m rows, the highest scores
// first; ties go to the lower index. Index order is user-id order.
std::vector<uint8_t> threshold_topquantile(const std::vector<double>& scores,
                                           double q = 0.95);

// ---------------------------------------------------------------------------
// Artifact serialization (coefficients and diagnostics; the basis matrix
// itself travels in the binary file written by save_pca_basis)

std::string model_json(const LogisticModel& m);
std::string model_json(const SparseLinearModel& m);
std::string basis_json(const PcaBasis& b);

}  // namespace cdrscope
