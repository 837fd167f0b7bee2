#include "cdrscope/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "cdrscope/csv.hpp"

namespace cdrscope {

namespace {

double ratio_or_zero(uint64_t num, uint64_t den) {
    return den ? double(num) / double(den) : 0.0;
}

std::string fmt10(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

double sigmoid(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    double e = std::exp(t);
    return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// Confusion metrics

ConfusionMetrics confusion_metrics(const std::vector<uint8_t>& predicted,
                                   const std::vector<uint8_t>& actual) {
    if (predicted.size() != actual.size())
        throw std::invalid_argument("prediction and label lengths differ");
    if (predicted.empty()) throw std::invalid_argument("empty label vectors");
    ConfusionMetrics m;
    for (size_t i = 0; i < predicted.size(); ++i) {
        bool ph = predicted[i] != 0, ah = actual[i] != 0;
        if (ph && ah)
            ++m.counts.tp;
        else if (ph && !ah)
            ++m.counts.fp;
        else if (!ph && ah)
            ++m.counts.fn;
        else
            ++m.counts.tn;
    }
    m.no_actual_positives = m.counts.tp + m.counts.fn == 0;
    m.no_predicted_positives = m.counts.tp + m.counts.fp == 0;
    m.no_actual_negatives = m.counts.fp + m.counts.tn == 0;
    m.recall = ratio_or_zero(m.counts.tp, m.counts.tp + m.counts.fn);
    m.precision = ratio_or_zero(m.counts.tp, m.counts.tp + m.counts.fp);
    m.fall_out = ratio_or_zero(m.counts.fp, m.counts.fp + m.counts.tn);
    return m;
}

// ---------------------------------------------------------------------------
// ROC

RocCurve roc_curve(const std::vector<double>& scores, const std::vector<uint8_t>& actual) {
    if (scores.size() != actual.size())
        throw std::invalid_argument("score and label lengths differ");
    if (scores.empty()) throw std::invalid_argument("empty score vector");
    for (double s : scores)
        if (!std::isfinite(s)) throw std::invalid_argument("non-finite score");

    RocCurve roc;
    for (uint8_t v : actual) (v ? roc.positives : roc.negatives) += 1;
    if (roc.positives == 0 || roc.negatives == 0)
        throw std::invalid_argument("roc needs both classes present");

    std::vector<uint32_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
        return scores[a] > scores[b];
    });

    roc.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    uint64_t tp = 0, fp = 0;
    double prev_fpr = 0.0, prev_tpr = 0.0;
    size_t i = 0;
    while (i < order.size()) {
        double threshold = scores[order[i]];
        // a block of tied scores moves as one threshold step
        while (i < order.size() && scores[order[i]] == threshold) {
            if (actual[order[i]])
                ++tp;
            else
                ++fp;
            ++i;
        }
        double fpr = double(fp) / double(roc.negatives);
        double tpr = double(tp) / double(roc.positives);
        roc.auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        roc.points.push_back({fpr, tpr, threshold});
        prev_fpr = fpr;
        prev_tpr = tpr;
    }
    return roc;
}

void write_roc_csv(const RocCurve& roc, const std::string& path) {
    CsvWriter w(path);
    w.raw_line("fpr,tpr,threshold");
    for (const RocPoint& pt : roc.points)
        w.row({fmt10(pt.fpr), fmt10(pt.tpr), fmt10(pt.threshold)});
}

// ---------------------------------------------------------------------------
// Ranking stability

StabilityScore ranking_stability(const std::vector<NodeId>& a, const std::vector<NodeId>& b,
                                 size_t depth) {
    if (depth == 0) throw std::invalid_argument("stability depth must be positive");
    if (depth > a.size() || depth > b.size())
        throw std::invalid_argument("stability depth exceeds a ranking length");
    std::unordered_set<NodeId> seen_a, seen_b;
    seen_a.reserve(depth * 2);
    seen_b.reserve(depth * 2);
    size_t inter = 0;
    double aos_sum = 0.0;
    for (size_t d = 0; d < depth; ++d) {
        if (!seen_a.insert(a[d]).second)
            throw std::invalid_argument("duplicate id in ranking");
        if (!seen_b.insert(b[d]).second)
            throw std::invalid_argument("duplicate id in ranking");
        // count each id once, when it first sits in both prefixes
        if (seen_b.count(a[d])) ++inter;
        if (b[d] != a[d] && seen_a.count(b[d])) ++inter;
        aos_sum += double(inter) / double(d + 1);
    }
    StabilityScore s;
    s.overlap = double(inter) / double(depth);
    s.aos = aos_sum / double(depth);
    return s;
}

// ---------------------------------------------------------------------------
// Recipe plumbing

std::vector<double> test_scores(const FeatureMatrix& fm, const std::vector<double>& scores) {
    if (scores.size() != fm.n)
        throw std::invalid_argument("score vector does not cover every row");
    std::vector<double> out;
    for (uint32_t r : fm.test_rows()) out.push_back(scores[r]);
    return out;
}

ConfusionMetrics topquantile_confusion(const FeatureMatrix& fm,
                                       const std::vector<double>& scores, double q) {
    std::vector<double> ts = test_scores(fm, scores);
    std::vector<uint8_t> predicted = threshold_topquantile(ts, q);
    std::vector<uint8_t> actual;
    for (uint32_t r : fm.test_rows()) actual.push_back(fm.y[r]);
    return confusion_metrics(predicted, actual);
}

// ---------------------------------------------------------------------------
// Group ablation

std::vector<AblationRow> ablate_groups(const FeatureMatrix& fm, const ModelRecipe& recipe,
                                       double q) {
    std::vector<AblationRow> rows;
    auto run = [&](const std::string& variant, const std::vector<uint32_t>& keep) {
        AblationRow row;
        row.variant = variant;
        row.columns = uint32_t(keep.size());
        try {
            if (keep.empty()) throw std::invalid_argument("variant keeps no columns");
            FeatureMatrix sub = subset_columns(fm, keep);
            FitOutcome out = recipe(sub);
            ConfusionMetrics cm = topquantile_confusion(sub, out.scores, q);
            row.recall = cm.recall;
            row.fall_out = cm.fall_out;
            row.precision = cm.precision;
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    };

    std::vector<uint32_t> all(fm.p);
    std::iota(all.begin(), all.end(), 0u);
    run("full", all);
    for (int g = 0; g < kFeatureGroupCount; ++g)
        run(std::string("-") + feature_group_name(FeatureGroup(g)),
            columns_not_in_group(fm, FeatureGroup(g)));
    run("correspondent-only", columns_in_group(fm, FeatureGroup::Correspondent));

    const AblationRow& full = rows.front();
    double nan = std::numeric_limits<double>::quiet_NaN();
    for (size_t i = 1; i < rows.size(); ++i) {
        if (full.failed || rows[i].failed) {
            rows[i].delta_recall = nan;
            rows[i].delta_precision = nan;
        } else {
            rows[i].delta_recall = full.recall - rows[i].recall;
            rows[i].delta_precision = full.precision - rows[i].precision;
        }
    }
    return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path) {
    CsvWriter w(path);
    w.raw_line("variant,columns,recall,fall_out,precision,delta_recall,delta_precision,error");
    for (const AblationRow& r : rows)
        w.row({r.variant, std::to_string(r.columns), fmt10(r.recall), fmt10(r.fall_out),
               fmt10(r.precision), fmt10(r.delta_recall), fmt10(r.delta_precision),
               r.failed ? r.error : std::string()});
}

// ---------------------------------------------------------------------------
// Back-mapping and contributions

std::vector<double> backmap_coefficients(const PcaBasis& basis,
                                         const std::vector<double>& beta_pc) {
    if (beta_pc.size() != basis.p1)
        throw std::invalid_argument("coefficient count does not match the basis");
    std::vector<double> out(basis.p, 0.0);
    for (uint32_t r = 0; r < basis.p; ++r) {
        double s = 0.0;
        for (uint32_t c = 0; c < basis.p1; ++c) s += basis.loading(r, c) * beta_pc[c];
        out[r] = s;
    }
    return out;
}

ContributionTable mean_relative_contribution(const FeatureMatrix& fm,
                                             const std::vector<double>& beta,
                                             double intercept, bool train_only) {
    if (beta.size() != fm.p)
        throw std::invalid_argument("coefficient count does not match the matrix");
    std::vector<uint32_t> rows;
    if (train_only)
        rows = fm.train_rows();
    else {
        rows.resize(fm.n);
        std::iota(rows.begin(), rows.end(), 0u);
    }

    ContributionTable t;
    t.names = fm.names;
    std::vector<double> sum1(fm.p, 0.0), sum0(fm.p, 0.0);
    double score1 = 0.0, score0 = 0.0;
    uint64_t n1 = 0, n0 = 0;
    for (uint32_t r : rows) {
        double score = intercept;
        for (uint32_t c = 0; c < fm.p; ++c) score += beta[c] * fm.at(r, c);
        if (fm.y[r]) {
            ++n1;
            score1 += score;
            for (uint32_t c = 0; c < fm.p; ++c) sum1[c] += fm.at(r, c);
        } else {
            ++n0;
            score0 += score;
            for (uint32_t c = 0; c < fm.p; ++c) sum0[c] += fm.at(r, c);
        }
    }
    t.defaulted_mean.resize(fm.p, 0.0);
    t.paying_mean.resize(fm.p, 0.0);
    double abs1 = 0.0, abs0 = 0.0;
    for (uint32_t c = 0; c < fm.p; ++c) {
        if (n1) t.defaulted_mean[c] = beta[c] * sum1[c] / double(n1);
        if (n0) t.paying_mean[c] = beta[c] * sum0[c] / double(n0);
        abs1 += std::abs(t.defaulted_mean[c]);
        abs0 += std::abs(t.paying_mean[c]);
    }
    t.defaulted_relative.resize(fm.p, 0.0);
    t.paying_relative.resize(fm.p, 0.0);
    for (uint32_t c = 0; c < fm.p; ++c) {
        if (abs1 > 0.0) t.defaulted_relative[c] = std::abs(t.defaulted_mean[c]) / abs1;
        if (abs0 > 0.0) t.paying_relative[c] = std::abs(t.paying_mean[c]) / abs0;
    }
    if (n1) t.score_mean_defaulted = score1 / double(n1);
    if (n0) t.score_mean_paying = score0 / double(n0);
    return t;
}

// ---------------------------------------------------------------------------
// Pratt importance

double pratt_r2(const std::vector<double>& beta_std, const std::vector<double>& rho) {
    if (beta_std.size() != rho.size())
        throw std::invalid_argument("coefficient and correlation lengths differ");
    double s = 0.0;
    for (size_t j = 0; j < beta_std.size(); ++j) s += beta_std[j] * rho[j];
    return s;
}

std::vector<double> pratt_vi(const std::vector<double>& beta_std,
                             const std::vector<double>& rho, double r2) {
    if (beta_std.size() != rho.size())
        throw std::invalid_argument("coefficient and correlation lengths differ");
    if (!(r2 > 0.0)) throw std::invalid_argument("importance needs a positive R^2");
    std::vector<double> d(beta_std.size());
    for (size_t j = 0; j < d.size(); ++j) d[j] = beta_std[j] * rho[j] / r2;
    return d;
}

double wls_pseudo_r2(const std::vector<double>& eta, const std::vector<uint8_t>& y) {
    if (eta.size() != y.size() || eta.empty())
        throw std::invalid_argument("score and label lengths differ");
    // weighted least-squares view of the fit: working response z with
    // weights pi(1-pi) evaluated at the fitted scores
    double wsum = 0.0, wz = 0.0;
    std::vector<double> w(eta.size()), z(eta.size());
    for (size_t i = 0; i < eta.size(); ++i) {
        double pi = std::clamp(sigmoid(eta[i]), 1e-10, 1.0 - 1e-10);
        w[i] = pi * (1.0 - pi);
        z[i] = eta[i] + ((y[i] ? 1.0 : 0.0) - pi) / w[i];
        wsum += w[i];
        wz += w[i] * z[i];
    }
    double zbar = wz / wsum;
    double resid = 0.0, total = 0.0;
    for (size_t i = 0; i < eta.size(); ++i) {
        resid += w[i] * (z[i] - eta[i]) * (z[i] - eta[i]);
        total += w[i] * (z[i] - zbar) * (z[i] - zbar);
    }
    if (!(total > 0.0)) throw std::invalid_argument("degenerate fit: zero weighted variance");
    return 1.0 - resid / total;
}

double mckelvey_zavoina_r2(const std::vector<double>& eta) {
    if (eta.empty()) throw std::invalid_argument("empty score vector");
    double mean = 0.0;
    for (double v : eta) mean += v;
    mean /= double(eta.size());
    double var = 0.0;
    for (double v : eta) var += (v - mean) * (v - mean);
    var /= double(eta.size());
    const double pi = 3.14159265358979323846;
    const double logistic_var = pi * pi / 3.0;
    return var / (var + logistic_var);
}

std::vector<double> label_correlations(const FeatureMatrix& fm, bool train_only) {
    std::vector<uint32_t> rows;
    if (train_only)
        rows = fm.train_rows();
    else {
        rows.resize(fm.n);
        std::iota(rows.begin(), rows.end(), 0u);
    }
    std::vector<uint8_t> yr;
    for (uint32_t r : rows) yr.push_back(fm.y[r]);
    std::vector<double> rho(fm.p);
    std::vector<double> col(rows.size());
    for (uint32_t c = 0; c < fm.p; ++c) {
        for (size_t i = 0; i < rows.size(); ++i) col[i] = fm.at(rows[i], c);
        rho[c] = point_biserial(col, yr);
    }
    return rho;
}

ViStabilityReport vi_stability_check(const FeatureMatrix& fm, const ModelRecipe& recipe,
                                     size_t top_k, double q) {
    if (top_k == 0) throw std::invalid_argument("top_k must be positive");
    if (top_k >= fm.p)
        throw std::invalid_argument("removing every column leaves an empty model");

    FitOutcome full = recipe(fm);
    if (full.beta.size() != fm.p)
        throw std::invalid_argument("recipe must supply per-column coefficients");
    std::vector<double> rho = label_correlations(fm);
    double r2 = pratt_r2(full.beta, rho);
    std::vector<double> d = pratt_vi(full.beta, rho, r2);

    std::vector<uint32_t> order(fm.p);
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
        if (d[a] != d[b]) return d[a] > d[b];
        return fm.names[a] < fm.names[b];
    });

    ViStabilityReport rep;
    rep.max_d_before = d[order.front()];
    std::vector<uint32_t> keep(order.begin() + long(top_k), order.end());
    std::sort(keep.begin(), keep.end());
    for (size_t i = 0; i < top_k; ++i) rep.removed.push_back(fm.names[order[i]]);

    FeatureMatrix sub = subset_columns(fm, keep);
    FitOutcome reduced = recipe(sub);
    rep.recall_before = topquantile_confusion(fm, full.scores, q).recall;
    rep.recall_after = topquantile_confusion(sub, reduced.scores, q).recall;
    rep.delta_recall = rep.recall_before - rep.recall_after;

    rep.max_d_after = std::numeric_limits<double>::quiet_NaN();
    if (reduced.beta.size() == sub.p) {
        std::vector<double> rho2 = label_correlations(sub);
        double r22 = pratt_r2(reduced.beta, rho2);
        if (r22 > 0.0) {
            std::vector<double> d2 = pratt_vi(reduced.beta, rho2, r22);
            rep.max_d_after = *std::max_element(d2.begin(), d2.end());
        }
    }
    return rep;
}

}  // namespace cdrscope
