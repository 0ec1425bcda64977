#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace hedgedisc {

/// Pairwise (cascade) summation; the result depends only on the input order.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 16) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

/// Sample mean with its standard error sqrt(var / n).
struct Estimate {
    double mean = 0.0;
    double se = 0.0;
    std::size_t n = 0;
};

inline Estimate estimate(std::span<const double> v) {
    Estimate e;
    e.n = v.size();
    if (v.empty()) {
        e.mean = e.se = std::numeric_limits<double>::quiet_NaN();
        return e;
    }
    e.mean = pairwise_sum(v) / static_cast<double>(v.size());
    if (v.size() < 2) {
        e.se = std::numeric_limits<double>::quiet_NaN();
        return e;
    }
    std::vector<double> sq(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - e.mean) * (v[i] - e.mean);
    const double var = pairwise_sum(sq) / static_cast<double>(v.size() - 1);
    e.se = std::sqrt(var / static_cast<double>(v.size()));
    return e;
}

/// Sample covariance of two equally long samples.
inline double sample_covariance(std::span<const double> a, std::span<const double> b) {
    const auto n = a.size();
    const double ma = pairwise_sum(a) / static_cast<double>(n);
    const double mb = pairwise_sum(b) / static_cast<double>(n);
    std::vector<double> prod(n);
    for (std::size_t i = 0; i < n; ++i) prod[i] = (a[i] - ma) * (b[i] - mb);
    return pairwise_sum(prod) / static_cast<double>(n - 1);
}

/// Ratio m / sqrt(q) of two sample means with a delta-method standard error.
inline Estimate ratio_to_root(std::span<const double> num, std::span<const double> den) {
    const auto n = static_cast<double>(num.size());
    const auto m = estimate(num);
    const auto q = estimate(den);
    Estimate r;
    r.n = num.size();
    r.mean = m.mean / std::sqrt(q.mean);
    const double dm = 1.0 / std::sqrt(q.mean);
    const double dq = -0.5 * m.mean / (q.mean * std::sqrt(q.mean));
    const double var = dm * dm * sample_covariance(num, num) + dq * dq * sample_covariance(den, den) +
                       2.0 * dm * dq * sample_covariance(num, den);
    r.se = std::sqrt(std::max(var, 0.0) / n);
    return r;
}

/// (value - target) / se
inline double z_score(double value, double target, double se) {
    return se > 0.0 ? (value - target) / se : (value == target ? 0.0 : std::numeric_limits<double>::infinity());
}

}  // namespace hedgedisc
