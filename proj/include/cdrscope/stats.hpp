#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace cdrscope {

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) throw std::invalid_argument("mean of empty vector");
    double s = 0;
    for (double x : v) s += x;
    return s / double(v.size());
}

// population variance (divide by n)
inline double variance_of(const std::vector<double>& v) {
    double m = mean_of(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return s / double(v.size());
}

inline double stddev_of(const std::vector<double>& v) { return std::sqrt(variance_of(v)); }

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("pearson needs two equal-length vectors, n >= 2");
    double mx = mean_of(x), my = mean_of(y);
    double sxx = 0, syy = 0, sxy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        double a = x[i] - mx, b = y[i] - my;
        sxx += a * a;
        syy += b * b;
        sxy += a * b;
    }
    if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("pearson on zero-variance input");
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace cdrscope
