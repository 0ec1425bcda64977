#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "hedgedisc/errors.hpp"
#include "hedgedisc/process_sim.hpp"
#include "hedgedisc/stats.hpp"

namespace hedgedisc {

/// Local skewness s and kurtosis a^2 of the limit law at one instant.
struct LimitPoint {
    double s = 0.0;
    double a2 = 0.0;
};

/// Barrier distances in units of epsilon: the rule rebalances when X leaves
/// (anchor - eps * lower, anchor + eps * upper).
struct BarrierPair {
    double lower = 1.0;
    double upper = 1.0;
};

/// s = lower - upper, a^2 = s^2 + lower * upper.
inline LimitPoint limit_pair_from_barriers(double lower, double upper) {
    if (!(lower > 0.0 && upper > 0.0)) throw std::invalid_argument("limit_pair_from_barriers: barriers must be positive");
    const double s = lower - upper;
    return {s, s * s + lower * upper};
}

/// Positive barriers with upper and -lower the roots of x^2 + s x + s^2 - a^2.
inline BarrierPair barriers_from_limit_pair(double s, double a2) {
    const double gap = a2 - s * s;  // = lower * upper
    if (!(gap > 0.0)) throw std::invalid_argument("barriers_from_limit_pair: need a^2 > s^2");
    const double root = std::sqrt(4.0 * a2 - 3.0 * s * s);
    // Take the larger root without cancellation, the other from the product.
    if (s >= 0.0) {
        const double lower = 0.5 * (s + root);
        return {lower, gap / lower};
    }
    const double upper = 0.5 * (root - s);
    return {gap / upper, upper};
}

/// (s_t, a_t^2) tabulated on a path's grid.
struct LimitPair {
    std::vector<double> s;
    std::vector<double> a2;
    std::string provenance;

    /// Largest violation of a^2 >= s^2 (0 when admissible).
    [[nodiscard]] double admissibility_gap() const {
        double worst = 0.0;
        for (std::size_t k = 0; k < s.size(); ++k) worst = std::max(worst, s[k] * s[k] - a2[k]);
        return worst;
    }
};

inline LimitPair limit_pair_from_barriers(std::span<const double> lower, std::span<const double> upper) {
    detail::require(lower.size() == upper.size(), "limit_pair_from_barriers: curve lengths differ");
    LimitPair p;
    p.provenance = "hitting";
    p.s.resize(lower.size());
    p.a2.resize(lower.size());
    for (std::size_t k = 0; k < lower.size(); ++k) {
        const auto pt = limit_pair_from_barriers(lower[k], upper[k]);
        p.s[k] = pt.s;
        p.a2[k] = pt.a2;
    }
    return p;
}

/// Equidistant rebalancing: s = 0, a^2 = 3 (sigma^X)^2.
inline LimitPair limit_pair_equidistant(std::span<const double> sigma_x) {
    LimitPair p;
    p.provenance = "equidistant";
    p.s.assign(sigma_x.size(), 0.0);
    p.a2.resize(sigma_x.size());
    for (std::size_t k = 0; k < sigma_x.size(); ++k) p.a2[k] = 3.0 * sigma_x[k] * sigma_x[k];
    return p;
}

/// Pathwise integrals that determine the limit moments, left-point on the grid.
struct LimitPathTerms {
    double skew_integral = 0.0;   ///< int s dY
    double drift_integral = 0.0;  ///< int s b^Y dt
    double residual = 0.0;        ///< int (a^2 - 2/3 s^2) (sigma^Y)^2 dt
    double skew_energy = 0.0;     ///< int s^2 (sigma^Y)^2 dt
    double integrability = 0.0;   ///< int (1 + rho^2)(a^2 + s^2)(sigma^Y)^2 dt

    /// E[(Z*)^2 | F] = (1/9)(int s dY)^2 + (1/6) residual
    [[nodiscard]] double second_moment() const { return skew_integral * skew_integral / 9.0 + residual / 6.0; }
    /// Conditional second moment of the martingale part.
    [[nodiscard]] double continuous_second_moment() const { return skew_energy / 9.0 + residual / 6.0; }
};

inline LimitPathTerms limit_path_terms(const LimitPair& pair, const PathBundle& path, const ModelSpec& model) {
    const std::size_t n = path.grid.size();
    detail::require(pair.s.size() == n && pair.a2.size() == n, "limit_path_terms: pair does not match the grid");
    const double h = path.grid.step();
    LimitPathTerms out;
    for (std::size_t k = 0; k + 1 < n; ++k) {
        const double t = path.grid.time(k);
        const double y = path.y[k];
        const double s = pair.s[k];
        const double a2 = pair.a2[k];
        const double resid = a2 - 2.0 / 3.0 * s * s;
        if (resid < -1e-12 * (1.0 + a2)) throw std::invalid_argument("limit_path_terms: a^2 < 2/3 s^2, invalid pair");
        const double vol = model.vol_abs(t, y);
        const double drift = model.drift_abs(t, y);
        const double vol2 = vol * vol;
        const double rho = drift / vol;
        out.skew_integral += s * (path.y[k + 1] - y);
        out.drift_integral += s * drift * h;
        out.residual += resid * vol2 * h;
        out.skew_energy += s * s * vol2 * h;
        out.integrability += (1.0 + rho * rho) * (a2 + s * s) * vol2 * h;
    }
    return out;
}

/// Monte Carlo moments of Z*_{a,s}. The B integral is conditioned out.
struct LimitMoments {
    Estimate mean;          ///< E[Z*] from (1/3) int s dY
    Estimate drift_mean;    ///< E[Z*] from (1/3) int s b^Y dt
    Estimate second;        ///< E[(Z*)^2]
    Estimate continuous;    ///< E[(Z*,c)^2]
    double integrability = 0.0;  ///< mean of the integrability integrand; finite for admissible pairs
};

inline LimitMoments limit_moments_mc(std::span<const LimitPathTerms> terms) {
    detail::require(!terms.empty(), "limit_moments_mc: no paths");
    const std::size_t n = terms.size();
    std::vector<double> a(n), b(n), c(n), d(n), e(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = terms[i].skew_integral / 3.0;
        b[i] = terms[i].drift_integral / 3.0;
        c[i] = terms[i].second_moment();
        d[i] = terms[i].continuous_second_moment();
        e[i] = terms[i].integrability;
    }
    LimitMoments m;
    m.mean = estimate(a);
    m.drift_mean = estimate(b);
    m.second = estimate(c);
    m.continuous = estimate(d);
    m.integrability = estimate(e).mean;
    if (!std::isfinite(m.integrability)) throw NumericalError("limit_moments_mc: integrability diagnostic is not finite");
    return m;
}

inline LimitMoments limit_moments_mc(std::span<const LimitPair> pairs, const ModelSpec& model,
                                     std::span<const PathBundle> paths) {
    detail::require(pairs.size() == paths.size(), "limit_moments_mc: one pair per path required");
    std::vector<LimitPathTerms> terms;
    terms.reserve(paths.size());
    for (std::size_t i = 0; i < paths.size(); ++i) terms.push_back(limit_path_terms(pairs[i], paths[i], model));
    return limit_moments_mc(terms);
}

/// S = E[Z*] / sqrt(E[(Z*,c)^2]).
inline double modified_sharpe(double mean, double continuous_second_moment) {
    if (!(continuous_second_moment > 0.0)) throw std::invalid_argument("modified_sharpe: continuous second moment is zero");
    return mean / std::sqrt(continuous_second_moment);
}

inline double modified_sharpe(const LimitMoments& m) { return modified_sharpe(m.drift_mean.mean, m.continuous.mean); }

/// int_0^T rho_t^2 dt for deterministic Black-Scholes coefficients, by
/// Gauss-Kronrod on every knot segment of the drift and volatility curves.
inline double integrated_sharpe_squared(const ModelSpec& model, double horizon) {
    detail::require(model.kind == ModelKind::black_scholes, "integrated_sharpe_squared: needs deterministic coefficients");
    std::vector<double> cuts{0.0, horizon};
    for (double t : model.drift.times())
        if (t > 0.0 && t < horizon) cuts.push_back(t);
    for (double t : model.vol.times())
        if (t > 0.0 && t < horizon) cuts.push_back(t);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    auto rho2 = [&](double t) {
        const double r = model.drift(t) / model.vol(t);
        return r * r;
    };
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
        total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(rho2, cuts[i], cuts[i + 1], 15, 1e-14);
    return total;
}

/// Upper bound (sqrt 6 / 3) sqrt(E int rho^2 dt) of the modified Sharpe ratio.
inline double sharpe_bound(const ModelSpec& model, double horizon) {
    return std::sqrt(6.0) / 3.0 * std::sqrt(integrated_sharpe_squared(model, horizon));
}

/// Same bound with E int rho^2 dt estimated over simulated paths.
inline double sharpe_bound_mc(const ModelSpec& model, std::span<const PathBundle> paths) {
    detail::require(!paths.empty(), "sharpe_bound_mc: no paths");
    std::vector<double> per_path(paths.size());
    for (std::size_t i = 0; i < paths.size(); ++i) {
        const auto& p = paths[i];
        double sum = 0.0;
        for (std::size_t k = 0; k + 1 < p.y.size(); ++k) {
            const double r = model.sharpe(p.grid.time(k), p.y[k]);
            sum += r * r * p.grid.step();
        }
        per_path[i] = sum;
    }
    return std::sqrt(6.0) / 3.0 * std::sqrt(estimate(per_path).mean);
}

/// Modified Sharpe ratio of the asymmetric rule with parameter lambda:
/// S(lambda) = bound * x / sqrt(1 + x^2), x = e^lambda - e^-lambda.
inline double sharpe_rule_ratio(double lambda, double bound) {
    const double x = 2.0 * std::sinh(lambda);
    return bound * x / std::sqrt(1.0 + x * x);
}

/// kappa = (sigma^Y / sigma^X)^2 along a path; NaN beyond `cutoff`, where
/// sigma^X vanishes.
inline std::vector<double> kappa_curve(const PathBundle& path, const ModelSpec& model, double cutoff) {
    detail::require(path.sigma_x.size() == path.grid.size(), "kappa_curve: sigma_x not filled");
    std::vector<double> kappa(path.grid.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t k = 0; k < kappa.size(); ++k) {
        const double t = path.grid.time(k);
        if (t > cutoff || path.sigma_x[k] <= 0.0) continue;
        const double r = model.vol_abs(t, path.y[k]) / path.sigma_x[k];
        kappa[k] = r * r;
    }
    return kappa;
}

}  // namespace hedgedisc
