#include "cdrscope/models.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

#include "cdrscope/eval.hpp"
#include "cdrscope/rng.hpp"

namespace cdrscope {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMat> map_rows(const std::vector<double>& x, size_t n, size_t p) {
    if (x.size() != n * p)
        throw std::invalid_argument("matrix storage does not match n*p");
    return Eigen::Map<const RowMat>(x.data(), long(n), long(p));
}

double sigmoid(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    double e = std::exp(t);
    return e / (1.0 + e);
}

// log(1 + e^t), overflow-safe
double log1pexp(double t) {
    if (t > 35.0) return t;
    if (t < -35.0) return std::exp(t);
    return std::log1p(std::exp(t));
}

// Flip component signs so the largest-magnitude loading of each column is
// positive (first such row on ties).
void fix_signs(MatrixXd& comps) {
    for (long c = 0; c < comps.cols(); ++c) {
        long arg = 0;
        double best = -1.0;
        for (long r = 0; r < comps.rows(); ++r) {
            double a = std::abs(comps(r, c));
            if (a > best) {
                best = a;
                arg = r;
            }
        }
        if (comps(arg, c) < 0.0) comps.col(c) = -comps.col(c);
    }
}

MatrixXd thin_q(const MatrixXd& m) {
    Eigen::HouseholderQR<MatrixXd> qr(m);
    return qr.householderQ() * MatrixXd::Identity(m.rows(), m.cols());
}

double soft_threshold(double v, double lam) {
    if (v > lam) return v - lam;
    if (v < -lam) return v + lam;
    return 0.0;
}

struct LassoPathPoint {
    VectorXd beta;
    double intercept = 0.0;
};

// Coordinate descent over the quadratic approximation, warm-started along
// the descending grid. X is column-major for fast column access.
std::vector<LassoPathPoint> lasso_path(const MatrixXd& x, const VectorXd& yv,
                                       const std::vector<double>& grid,
                                       const LassoOptions& opt, bool& converged) {
    const long n = x.rows(), p = x.cols();
    VectorXd beta = VectorXd::Zero(p);
    double ybar = yv.mean();
    double b0 = std::log(std::clamp(ybar, 1e-12, 1.0 - 1e-12) /
                         (1.0 - std::clamp(ybar, 1e-12, 1.0 - 1e-12)));
    converged = true;

    std::vector<LassoPathPoint> out;
    out.reserve(grid.size());
    for (double lam : grid) {
        for (uint32_t outer = 0;; ++outer) {
            if (outer >= opt.max_reweights) {
                converged = false;
                break;
            }
            VectorXd eta = ((x * beta).array() + b0).matrix();
            VectorXd w(n), z(n);
            for (long i = 0; i < n; ++i) {
                double pi = std::clamp(sigmoid(eta(i)), 1e-5, 1.0 - 1e-5);
                w(i) = pi * (1.0 - pi);
                z(i) = eta(i) + (yv(i) - pi) / w(i);
            }
            VectorXd v(p);
            for (long j = 0; j < p; ++j)
                v(j) = (w.array() * x.col(j).array().square()).sum() / double(n);
            VectorXd r = z - eta;  // residual of the working response
            double outer_move = 0.0;
            for (uint32_t sweep = 0; sweep < opt.max_sweeps; ++sweep) {
                double maxd = 0.0;
                double db0 = (w.array() * r.array()).sum() / w.sum();
                b0 += db0;
                r.array() -= db0;
                maxd = std::max(maxd, std::abs(db0));
                for (long j = 0; j < p; ++j) {
                    if (v(j) <= 0.0) continue;  // constant column
                    double rho =
                        (w.array() * x.col(j).array() * r.array()).sum() / double(n) +
                        v(j) * beta(j);
                    double nb = soft_threshold(rho, lam) / v(j);
                    double d = nb - beta(j);
                    if (d != 0.0) {
                        beta(j) = nb;
                        r -= d * x.col(j);
                        maxd = std::max(maxd, std::abs(d));
                    }
                }
                outer_move = std::max(outer_move, maxd);
                if (maxd < opt.tol) break;
            }
            if (outer_move < opt.tol) break;  // re-approximation changed nothing
        }
        out.push_back({beta, b0});
    }
    return out;
}

std::vector<uint32_t> nonzero_support(const VectorXd& beta) {
    std::vector<uint32_t> s;
    for (long j = 0; j < beta.size(); ++j)
        if (beta(j) != 0.0) s.push_back(uint32_t(j));
    return s;
}

constexpr char kPcaMagic[8] = {'C', 'D', 'R', 'P', 'C', 'A', '0', '1'};

}  // namespace

// ---------------------------------------------------------------------------
// PCA

PcaBasis pca_fit(const std::vector<double>& x, size_t n, size_t p, uint32_t p1,
                 const PcaOptions& opt) {
    if (n == 0 || p == 0) throw std::invalid_argument("pca on an empty matrix");
    auto xm = map_rows(x, n, p);
    if (p1 == 0 || size_t(p1) > std::min(n, p))
        throw std::invalid_argument("component count must lie in [1, min(n, p)]");

    VectorXd mu = xm.colwise().mean();
    MatrixXd xc = xm.rowwise() - mu.transpose();
    double total_var = xc.squaredNorm() / double(n);
    if (!(total_var > 0.0)) throw std::invalid_argument("pca on constant input");

    MatrixXd comps;   // p x kept
    VectorXd lambda;  // kept, descending
    if (p <= opt.dense_limit) {
        MatrixXd cov = (xc.transpose() * xc) / double(n);
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov);
        if (es.info() != Eigen::Success) throw std::runtime_error("eigensolver failed");
        const VectorXd& ev = es.eigenvalues();  // ascending
        double tol = std::max(ev(long(p) - 1), 0.0) * 1e-12;
        uint32_t kept = 0;
        while (kept < p1 && ev(long(p) - 1 - kept) > tol) ++kept;
        comps.resize(long(p), kept);
        lambda.resize(kept);
        for (uint32_t i = 0; i < kept; ++i) {
            comps.col(i) = es.eigenvectors().col(long(p) - 1 - i);
            lambda(i) = ev(long(p) - 1 - i);
        }
    } else {
        size_t k = std::min(size_t(p1) + opt.probe_extra, std::min(n, p));
        Rng rng(opt.seed);
        MatrixXd probe(static_cast<long>(p), static_cast<long>(k));
        for (long c = 0; c < probe.cols(); ++c)
            for (long r = 0; r < probe.rows(); ++r) probe(r, c) = rng.normal();
        MatrixXd q = thin_q(xc.transpose() * (xc * probe));
        for (uint32_t it = 0; it < opt.power_iters; ++it)
            q = thin_q(xc.transpose() * (xc * q));
        MatrixXd b = xc * q;
        MatrixXd small = (b.transpose() * b) / double(n);
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(small);
        if (es.info() != Eigen::Success) throw std::runtime_error("eigensolver failed");
        const VectorXd& ev = es.eigenvalues();
        double tol = std::max(ev(long(k) - 1), 0.0) * 1e-12;
        uint32_t kept = 0;
        while (kept < p1 && kept < k && ev(long(k) - 1 - kept) > tol) ++kept;
        comps.resize(long(p), kept);
        lambda.resize(kept);
        for (uint32_t i = 0; i < kept; ++i) {
            comps.col(i) = q * es.eigenvectors().col(long(k) - 1 - i);
            lambda(i) = ev(long(k) - 1 - i);
        }
    }
    fix_signs(comps);

    PcaBasis basis;
    basis.p = uint32_t(p);
    basis.p1 = uint32_t(comps.cols());
    basis.requested = p1;
    basis.mean.assign(mu.data(), mu.data() + p);
    basis.c.resize(size_t(p) * basis.p1);
    Eigen::Map<RowMat>(basis.c.data(), long(p), long(basis.p1)) = comps;
    basis.explained.resize(basis.p1);
    for (uint32_t i = 0; i < basis.p1; ++i) basis.explained[i] = lambda(i) / total_var;
    if (basis.p1 < p1) {
        basis.truncated = true;
        basis.warnings.push_back("requested " + std::to_string(p1) +
                                 " components but the numerical rank is " +
                                 std::to_string(basis.p1) + "; truncated");
    }
    return basis;
}

std::vector<double> pca_transform(const std::vector<double>& x, size_t n,
                                  const PcaBasis& basis) {
    auto xm = map_rows(x, n, basis.p);
    Eigen::Map<const VectorXd> mu(basis.mean.data(), long(basis.p));
    Eigen::Map<const RowMat> c(basis.c.data(), long(basis.p), long(basis.p1));
    std::vector<double> out(n * basis.p1);
    Eigen::Map<RowMat>(out.data(), long(n), long(basis.p1)) =
        (xm.rowwise() - mu.transpose()) * c;
    return out;
}

void save_pca_basis(const PcaBasis& basis, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path);
    out.write(kPcaMagic, sizeof kPcaMagic);
    uint32_t hdr[3] = {basis.p, basis.p1, basis.requested};
    out.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
    uint8_t trunc = basis.truncated ? 1 : 0;
    out.write(reinterpret_cast<const char*>(&trunc), 1);
    auto dump = [&](const std::vector<double>& v) {
        out.write(reinterpret_cast<const char*>(v.data()),
                  std::streamsize(v.size() * sizeof(double)));
    };
    dump(basis.mean);
    dump(basis.explained);
    dump(basis.c);
    if (!out) throw std::runtime_error("short write: " + path);
}

PcaBasis load_pca_basis(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kPcaMagic, sizeof magic) != 0)
        throw std::runtime_error("not a basis file: " + path);
    uint32_t hdr[3];
    in.read(reinterpret_cast<char*>(hdr), sizeof hdr);
    uint8_t trunc = 0;
    in.read(reinterpret_cast<char*>(&trunc), 1);
    PcaBasis basis;
    basis.p = hdr[0];
    basis.p1 = hdr[1];
    basis.requested = hdr[2];
    basis.truncated = trunc != 0;
    if (basis.p1 > basis.p) throw std::runtime_error("corrupt basis file: " + path);
    auto slurp = [&](std::vector<double>& v, size_t count) {
        v.resize(count);
        in.read(reinterpret_cast<char*>(v.data()), std::streamsize(count * sizeof(double)));
    };
    slurp(basis.mean, basis.p);
    slurp(basis.explained, basis.p1);
    slurp(basis.c, size_t(basis.p) * basis.p1);
    if (!in) throw std::runtime_error("truncated basis file: " + path);
    return basis;
}

// ---------------------------------------------------------------------------
// Logistic regression

LogisticModel logistic_fit(const std::vector<double>& x, size_t n, size_t p,
                           const std::vector<uint8_t>& y, const LogisticOptions& opt) {
    if (n == 0) throw std::invalid_argument("logistic fit on an empty matrix");
    if (y.size() != n) throw std::invalid_argument("label count does not match rows");
    auto xm = map_rows(x, n, p);
    VectorXd yv(static_cast<long>(n));
    for (size_t i = 0; i < n; ++i) yv(long(i)) = y[i] ? 1.0 : 0.0;

    const long d = long(p) + 1;
    VectorXd b = VectorXd::Zero(d);  // [intercept, beta...]
    auto eta_of = [&](const VectorXd& bb) -> VectorXd {
        VectorXd eta = VectorXd::Constant(long(n), bb(0));
        if (p) eta += xm * bb.tail(long(p));
        return eta;
    };
    auto penalized_ll = [&](const VectorXd& bb, const VectorXd& eta) {
        double ll = 0.0;
        for (long i = 0; i < long(n); ++i) ll += yv(i) * eta(i) - log1pexp(eta(i));
        if (p) ll -= 0.5 * opt.ridge * bb.tail(long(p)).squaredNorm();
        return ll;
    };

    LogisticModel m;
    VectorXd eta = eta_of(b);
    double cur = penalized_ll(b, eta);
    VectorXd w(static_cast<long>(n));
    uint32_t it = 0;
    for (;;) {
        VectorXd resid(static_cast<long>(n));
        for (long i = 0; i < long(n); ++i) {
            double pi = sigmoid(eta(i));
            w(i) = pi * (1.0 - pi);
            resid(i) = yv(i) - pi;
        }
        VectorXd g(d);
        g(0) = resid.sum();
        if (p) g.tail(long(p)) = xm.transpose() * resid - opt.ridge * b.tail(long(p));
        m.grad_norm = g.cwiseAbs().maxCoeff();
        if (m.grad_norm < opt.grad_tol) {
            m.converged = true;
            break;
        }
        if (it >= opt.max_iters) break;
        ++it;
        MatrixXd h(d, d);
        h(0, 0) = w.sum();
        if (p) {
            VectorXd xw = xm.transpose() * w;
            h.block(0, 1, 1, long(p)) = xw.transpose();
            h.block(1, 0, long(p), 1) = xw;
            h.block(1, 1, long(p), long(p)) =
                xm.transpose() * w.asDiagonal() * xm;
        }
        h.diagonal().array() += opt.ridge;
        VectorXd step = h.ldlt().solve(g);
        double t = 1.0;
        VectorXd nb, neta;
        double nll = -std::numeric_limits<double>::infinity();
        for (int halvings = 0; halvings < 40; ++halvings) {
            nb = b + t * step;
            neta = eta_of(nb);
            nll = penalized_ll(nb, neta);
            if (nll >= cur - 1e-12) break;
            t *= 0.5;
        }
        b = nb;
        eta = neta;
        cur = nll;
    }
    m.iters = it;
    // fitted probabilities pinned within 1e-5 of 0 or 1 point at separation
    m.separation_suspected = eta.cwiseAbs().maxCoeff() > 11.5;

    // Wald errors from the (jittered) observed information at the optimum.
    for (long i = 0; i < long(n); ++i) {
        double pi = sigmoid(eta(i));
        w(i) = pi * (1.0 - pi);
    }
    MatrixXd h(d, d);
    h(0, 0) = w.sum();
    if (p) {
        VectorXd xw = xm.transpose() * w;
        h.block(0, 1, 1, long(p)) = xw.transpose();
        h.block(1, 0, long(p), 1) = xw;
        h.block(1, 1, long(p), long(p)) = xm.transpose() * w.asDiagonal() * xm;
    }
    h.diagonal().array() += opt.ridge;
    MatrixXd cov = h.inverse();

    m.intercept = b(0);
    m.beta.assign(b.data() + 1, b.data() + d);
    auto wald = [&](double coef, double var, double& se, double& pval) {
        se = var > 0.0 ? std::sqrt(var) : 0.0;
        pval = se > 0.0 ? std::erfc(std::abs(coef / se) / std::sqrt(2.0)) : 0.0;
    };
    wald(b(0), cov(0, 0), m.intercept_se, m.intercept_p);
    m.se.resize(p);
    m.p_value.resize(p);
    for (size_t j = 0; j < p; ++j)
        wald(b(long(j) + 1), cov(long(j) + 1, long(j) + 1), m.se[j], m.p_value[j]);
    return m;
}

std::vector<double> logistic_decision(const LogisticModel& m, const std::vector<double>& x,
                                      size_t n) {
    auto xm = map_rows(x, n, m.beta.size());
    Eigen::Map<const VectorXd> beta(m.beta.data(), long(m.beta.size()));
    std::vector<double> out(n);
    Eigen::Map<VectorXd>(out.data(), long(n)) =
        ((xm * beta).array() + m.intercept).matrix();
    return out;
}

std::vector<double> logistic_predict(const LogisticModel& m, const std::vector<double>& x,
                                     size_t n) {
    std::vector<double> out = logistic_decision(m, x, n);
    for (double& v : out) v = sigmoid(v);
    return out;
}

double logistic_loglik(const std::vector<double>& x, size_t n, size_t p,
                       const std::vector<uint8_t>& y, double intercept,
                       const std::vector<double>& beta) {
    if (beta.size() != p) throw std::invalid_argument("coefficient count mismatch");
    if (y.size() != n || n == 0) throw std::invalid_argument("label count mismatch");
    auto xm = map_rows(x, n, p);
    double ll = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double eta = intercept;
        for (size_t j = 0; j < p; ++j) eta += xm(long(i), long(j)) * beta[j];
        ll += (y[i] ? eta : 0.0) - log1pexp(eta);
    }
    return ll / double(n);
}

std::vector<double> logistic_gradient(const std::vector<double>& x, size_t n, size_t p,
                                      const std::vector<uint8_t>& y, double intercept,
                                      const std::vector<double>& beta) {
    if (beta.size() != p) throw std::invalid_argument("coefficient count mismatch");
    if (y.size() != n || n == 0) throw std::invalid_argument("label count mismatch");
    auto xm = map_rows(x, n, p);
    std::vector<double> g(p + 1, 0.0);
    for (size_t i = 0; i < n; ++i) {
        double eta = intercept;
        for (size_t j = 0; j < p; ++j) eta += xm(long(i), long(j)) * beta[j];
        double r = (y[i] ? 1.0 : 0.0) - sigmoid(eta);
        g[0] += r;
        for (size_t j = 0; j < p; ++j) g[j + 1] += xm(long(i), long(j)) * r;
    }
    for (double& v : g) v /= double(n);
    return g;
}

PvalueFilterResult filter_by_pvalue(const std::vector<double>& x, size_t n, size_t p,
                                    const std::vector<uint8_t>& y,
                                    const LogisticModel& full, double threshold,
                                    const LogisticOptions& opt) {
    if (full.p_value.size() != p)
        throw std::invalid_argument("model p-values do not match the matrix");
    PvalueFilterResult res;
    for (uint32_t j = 0; j < p; ++j)
        if (full.p_value[j] < threshold) res.kept.push_back(j);
    if (res.kept.empty())
        throw std::invalid_argument("p-value filter retained no columns");
    auto xm = map_rows(x, n, p);
    std::vector<double> sub(n * res.kept.size());
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < res.kept.size(); ++j)
            sub[i * res.kept.size() + j] = xm(long(i), long(res.kept[j]));
    res.model = logistic_fit(sub, n, res.kept.size(), y, opt);
    return res;
}

OversampledData oversample(const std::vector<double>& x, size_t n, size_t p,
                           const std::vector<uint8_t>& y, uint32_t factor) {
    if (factor < 2) throw std::invalid_argument("oversampling factor must be at least 2");
    if (y.size() != n) throw std::invalid_argument("label count does not match rows");
    map_rows(x, n, p);  // size validation
    size_t npos = 0;
    for (uint8_t v : y) npos += v ? 1 : 0;
    if (npos == 0) throw std::invalid_argument("no positive rows to oversample");

    OversampledData out;
    out.n = n + size_t(factor - 1) * npos;
    out.x.reserve(out.n * p);
    out.y.reserve(out.n);
    out.x = x;
    out.y = y;
    for (uint32_t rep = 1; rep < factor; ++rep) {
        for (size_t i = 0; i < n; ++i) {
            if (!y[i]) continue;
            out.x.insert(out.x.end(), x.begin() + long(i * p), x.begin() + long((i + 1) * p));
            out.y.push_back(1);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Lasso

SparseLinearModel lasso_logistic_fit(const std::vector<double>& x, size_t n, size_t p,
                                     const std::vector<uint8_t>& y,
                                     const LassoOptions& opt) {
    if (n == 0 || p == 0) throw std::invalid_argument("lasso on an empty matrix");
    if (y.size() != n) throw std::invalid_argument("label count does not match rows");
    if (opt.folds < 2) throw std::invalid_argument("need at least two folds");
    auto xm = map_rows(x, n, p);
    size_t npos = 0;
    for (uint8_t v : y) npos += v ? 1 : 0;
    if (npos == 0 || npos == n)
        throw std::invalid_argument("lasso needs both classes present");

    MatrixXd xc = xm;  // column-major copy for coordinate access
    VectorXd yv(static_cast<long>(n));
    for (size_t i = 0; i < n; ++i) yv(long(i)) = y[i] ? 1.0 : 0.0;

    std::vector<double> grid = opt.lambda_grid;
    if (grid.empty()) {
        double ybar = yv.mean();
        double lam_max = 0.0;
        for (long j = 0; j < long(p); ++j)
            lam_max = std::max(lam_max,
                               std::abs((xc.col(j).array() * (yv.array() - ybar)).sum()) /
                                   double(n));
        if (!(lam_max > 0.0)) throw std::invalid_argument("degenerate penalty grid");
        lam_max *= 1.0001;
        uint32_t g = std::max<uint32_t>(opt.grid_size, 2);
        double ratio = std::pow(opt.grid_ratio, 1.0 / double(g - 1));
        grid.resize(g);
        for (uint32_t i = 0; i < g; ++i) grid[i] = lam_max * std::pow(ratio, double(i));
    } else {
        for (size_t i = 0; i < grid.size(); ++i) {
            if (grid[i] < 0.0) throw std::invalid_argument("negative penalty");
            if (i && grid[i] >= grid[i - 1])
                throw std::invalid_argument("penalty grid must be strictly descending");
        }
    }

    SparseLinearModel m;
    m.kind = "lasso-logistic";
    m.grid = grid;

    bool full_conv = true;
    auto full_path = lasso_path(xc, yv, grid, opt, full_conv);
    m.converged = full_conv;
    m.path_support.reserve(grid.size());
    bool any_nonzero = false;
    for (const auto& pt : full_path) {
        auto s = nonzero_support(pt.beta);
        if (!s.empty()) any_nonzero = true;
        m.path_support.push_back(uint32_t(s.size()));
    }
    if (!any_nonzero)
        m.warnings.push_back("every grid penalty produced an all-zero model");

    // Stratified fold assignment, deterministic in the seed.
    std::vector<uint32_t> pos, neg;
    for (uint32_t i = 0; i < n; ++i) (y[i] ? pos : neg).push_back(i);
    Rng rng(opt.seed);
    rng.shuffle(pos);
    rng.shuffle(neg);
    std::vector<uint32_t> fold(n);
    for (size_t i = 0; i < pos.size(); ++i) fold[pos[i]] = uint32_t(i % opt.folds);
    for (size_t i = 0; i < neg.size(); ++i) fold[neg[i]] = uint32_t(i % opt.folds);

    std::vector<double> auc_sum(grid.size(), 0.0);
    uint32_t used = 0;
    for (uint32_t f = 0; f < opt.folds; ++f) {
        std::vector<uint32_t> tr, va;
        for (uint32_t i = 0; i < n; ++i) (fold[i] == f ? va : tr).push_back(i);
        size_t va_pos = 0;
        for (uint32_t i : va) va_pos += y[i] ? 1 : 0;
        if (va.empty() || va_pos == 0 || va_pos == va.size()) continue;
        size_t tr_pos = 0;
        for (uint32_t i : tr) tr_pos += y[i] ? 1 : 0;
        if (tr.empty() || tr_pos == 0 || tr_pos == tr.size()) continue;

        MatrixXd xt(static_cast<long>(tr.size()), static_cast<long>(p));
        VectorXd yt(static_cast<long>(tr.size()));
        for (size_t i = 0; i < tr.size(); ++i) {
            xt.row(long(i)) = xc.row(long(tr[i]));
            yt(long(i)) = yv(long(tr[i]));
        }
        bool conv = true;
        auto path = lasso_path(xt, yt, grid, opt, conv);
        std::vector<uint8_t> yva(va.size());
        for (size_t i = 0; i < va.size(); ++i) yva[i] = y[va[i]];
        for (size_t gi = 0; gi < grid.size(); ++gi) {
            std::vector<double> score(va.size());
            for (size_t i = 0; i < va.size(); ++i)
                score[i] = xc.row(long(va[i])).dot(path[gi].beta) + path[gi].intercept;
            auc_sum[gi] += roc_curve(score, yva).auc;
        }
        ++used;
    }
    if (used == 0)
        throw std::invalid_argument(
            "cross-validation needs both classes in every usable fold");
    m.folds_used = used;
    m.cv_auc.resize(grid.size());
    size_t best = 0;
    for (size_t gi = 0; gi < grid.size(); ++gi) {
        m.cv_auc[gi] = auc_sum[gi] / double(used);
        if (m.cv_auc[gi] > m.cv_auc[best] + 1e-12) best = gi;
    }

    m.lambda = grid[best];
    m.intercept = full_path[best].intercept;
    m.w.assign(full_path[best].beta.data(), full_path[best].beta.data() + p);
    m.support = nonzero_support(full_path[best].beta);
    m.all_zero = m.support.empty();
    if (m.all_zero) m.warnings.push_back("selected penalty left every coefficient at zero");
    return m;
}

// ---------------------------------------------------------------------------
// Linear SVM

SparseLinearModel linear_svm_fit(const std::vector<double>& x, size_t n, size_t p,
                                 const std::vector<uint8_t>& y, const SvmOptions& opt) {
    if (n == 0 || p == 0) throw std::invalid_argument("svm on an empty matrix");
    if (y.size() != n) throw std::invalid_argument("label count does not match rows");
    if (!(opt.reg > 0.0)) throw std::invalid_argument("regularization must be positive");
    auto xm = map_rows(x, n, p);
    VectorXd s = VectorXd::Zero(long(n));
    for (size_t i = 0; i < n; ++i) s(long(i)) = y[i] ? 1.0 : -1.0;

    VectorXd w = VectorXd::Zero(long(p));
    double b = 0.0;
    for (uint32_t t = 0; t < opt.epochs; ++t) {
        VectorXd margin = s.cwiseProduct(((xm * w).array() + b).matrix());
        VectorXd gw = opt.reg * w;
        double gb = 0.0;
        for (long i = 0; i < long(n); ++i) {
            if (margin(i) < 1.0) {
                gw -= (s(i) / double(n)) * xm.row(i).transpose();
                gb -= s(i) / double(n);
            }
        }
        double lr = opt.lr0 / (1.0 + opt.reg * opt.lr0 * double(t));
        w -= lr * gw;
        b -= lr * gb;
        if (!w.allFinite() || !std::isfinite(b))
            throw std::runtime_error("svm loss diverged");
    }

    SparseLinearModel m;
    m.kind = "linear-svm";
    m.intercept = b;
    m.w.assign(w.data(), w.data() + p);
    m.support = nonzero_support(w);
    m.all_zero = m.support.empty();
    m.lambda = opt.reg;
    return m;
}

std::vector<double> linear_decision(const SparseLinearModel& m, const std::vector<double>& x,
                                    size_t n) {
    auto xm = map_rows(x, n, m.w.size());
    Eigen::Map<const VectorXd> w(m.w.data(), long(m.w.size()));
    std::vector<double> out(n);
    Eigen::Map<VectorXd>(out.data(), long(n)) = ((xm * w).array() + m.intercept).matrix();
    return out;
}

double hinge_loss(const SparseLinearModel& m, const std::vector<double>& x, size_t n,
                  const std::vector<uint8_t>& y) {
    if (y.size() != n || n == 0) throw std::invalid_argument("label count mismatch");
    std::vector<double> dec = linear_decision(m, x, n);
    double loss = 0.0;
    for (size_t i = 0; i < n; ++i)
        loss += std::max(0.0, 1.0 - (y[i] ? 1.0 : -1.0) * dec[i]);
    return loss / double(n);
}

// ---------------------------------------------------------------------------
// Thresholding

std::vector<uint8_t> threshold_topquantile(const std::vector<double>& scores, double q) {
    if (scores.empty()) throw std::invalid_argument("no scores to threshold");
    if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("quantile must be in (0, 1)");
    for (double s : scores)
        if (!std::isfinite(s)) throw std::invalid_argument("non-finite score");
    size_t m = scores.size();
    // ceil((1-q)*m) with a nudge so binary representations of q do not tip
    // an exact product over the next integer
    size_t k = size_t(std::ceil((1.0 - q) * double(m) - 1e-9));
    k = std::clamp<size_t>(k, 1, m);
    std::vector<uint32_t> order(m);
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    std::vector<uint8_t> labels(m, 0);
    for (size_t i = 0; i < k; ++i) labels[order[i]] = 1;
    return labels;
}

// ---------------------------------------------------------------------------
// Serialization

std::string model_json(const LogisticModel& m) {
    nlohmann::json j;
    j["kind"] = "logistic";
    j["intercept"] = m.intercept;
    j["beta"] = m.beta;
    j["intercept_se"] = m.intercept_se;
    j["se"] = m.se;
    j["intercept_p"] = m.intercept_p;
    j["p_value"] = m.p_value;
    j["converged"] = m.converged;
    j["iters"] = m.iters;
    j["grad_norm"] = m.grad_norm;
    j["separation_suspected"] = m.separation_suspected;
    return j.dump(2);
}

std::string model_json(const SparseLinearModel& m) {
    nlohmann::json j;
    j["kind"] = m.kind;
    j["intercept"] = m.intercept;
    j["w"] = m.w;
    j["support"] = m.support;
    j["lambda"] = m.lambda;
    j["all_zero"] = m.all_zero;
    j["grid"] = m.grid;
    j["cv_auc"] = m.cv_auc;
    j["path_support"] = m.path_support;
    j["folds_used"] = m.folds_used;
    j["converged"] = m.converged;
    j["warnings"] = m.warnings;
    return j.dump(2);
}

std::string basis_json(const PcaBasis& b) {
    nlohmann::json j;
    j["kind"] = "pca";
    j["p"] = b.p;
    j["p1"] = b.p1;
    j["requested"] = b.requested;
    j["explained"] = b.explained;
    j["truncated"] = b.truncated;
    j["warnings"] = b.warnings;
    return j.dump(2);
}

}  // namespace cdrscope
