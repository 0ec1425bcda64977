#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "hedgedisc/errors.hpp"
#include "hedgedisc/process_sim.hpp"

namespace hedgedisc {

/// Standard normal density.
inline double norm_pdf(double x) {
    return std::exp(-0.5 * x * x) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
}

/// Standard normal distribution function.
inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

enum class Payoff { call };

/// European option hedged with its Black-Scholes delta (zero rates).
struct DeltaSpec {
    double strike = 100.0;
    double vol = 0.2;       ///< pricing volatility
    double maturity = 1.0;  ///< years
    Payoff payoff = Payoff::call;

    void validate() const {
        detail::require(strike > 0.0, "delta: strike must be positive");
        detail::require(vol > 0.0, "delta: pricing volatility must be positive");
        detail::require(maturity > 0.0, "delta: maturity must be positive");
    }
};

namespace detail {

inline double d1(double t, double y, const DeltaSpec& spec) {
    const double total_sd = spec.vol * std::sqrt(spec.maturity - t);
    return (std::log(y / spec.strike) + 0.5 * total_sd * total_sd) / total_sd;
}

}  // namespace detail

/// Delta of the call: Phi(d1). At maturity the terminal indicator 1{y > K},
/// with 1/2 at the money.
inline double bs_delta(double t, double y, const DeltaSpec& spec) {
    if (!(y > 0.0)) throw std::invalid_argument("bs_delta: price must be positive");
    if (t > spec.maturity) throw std::invalid_argument("bs_delta: time beyond maturity");
    if (t == spec.maturity) return y > spec.strike ? 1.0 : (y < spec.strike ? 0.0 : 0.5);
    return norm_cdf(detail::d1(t, y, spec));
}

/// dX/dy = phi(d1) / (y sigma sqrt(T - t)); zero at maturity.
inline double bs_delta_sensitivity(double t, double y, const DeltaSpec& spec) {
    if (!(y > 0.0)) throw std::invalid_argument("bs_delta_sensitivity: price must be positive");
    if (t > spec.maturity) throw std::invalid_argument("bs_delta_sensitivity: time beyond maturity");
    if (t == spec.maturity) return 0.0;
    const double total_sd = spec.vol * std::sqrt(spec.maturity - t);
    return norm_pdf(detail::d1(t, y, spec)) / (y * total_sd);
}

/// Volatility of X when the underlying moves with the pricing volatility:
/// sigma phi(d1) (d d1/dy) y = phi(d1) / sqrt(T - t). Zero at maturity.
inline double bs_delta_vol(double t, double y, const DeltaSpec& spec) {
    return bs_delta_sensitivity(t, y, spec) * spec.vol * y;
}

/// Fill X and its volatility along the path. sigma_x uses the model's own
/// volatility of Y, which may differ from the pricing volatility.
inline void delta_path(PathBundle& path, const DeltaSpec& spec, const ModelSpec& model) {
    spec.validate();
    const std::size_t n = path.grid.size();
    detail::require(path.y.size() == n, "delta_path: path has no prices");
    detail::require(std::abs(path.grid.horizon() - spec.maturity) < 1e-12,
                    "delta_path: grid horizon must equal the option maturity");
    path.x.resize(n);
    path.sigma_x.resize(n);
    const double log_k = std::log(spec.strike);
    for (std::size_t k = 0; k + 1 < n; ++k) {
        const double t = path.grid.time(k);
        const double y = path.y[k];
        if (!(y > 0.0))
            throw NumericalError("delta_path: non-positive price on path " + std::to_string(path.path_id) +
                                 " at t = " + std::to_string(t));
        const double total_sd = spec.vol * std::sqrt(spec.maturity - t);
        const double d1 = (std::log(y) - log_k) / total_sd + 0.5 * total_sd;
        path.x[k] = norm_cdf(d1);
        path.sigma_x[k] = norm_pdf(d1) / (y * total_sd) * model.vol_abs(t, y);
    }
    if (!(path.y[n - 1] > 0.0))
        throw NumericalError("delta_path: non-positive terminal price on path " + std::to_string(path.path_id));
    path.x[n - 1] = bs_delta(spec.maturity, path.y[n - 1], spec);
    path.sigma_x[n - 1] = 0.0;
}

/// Same as above when the model volatility equals the pricing volatility.
inline void delta_path(PathBundle& path, const DeltaSpec& spec) {
    delta_path(path, spec, ModelSpec::black_scholes(path.y.empty() ? 1.0 : path.y[0], Curve(0.0), Curve(spec.vol)));
}

/// Benchmark P&L: left-point sum of X dY over the grid.
inline double benchmark_pnl(const PathBundle& path) {
    detail::require(path.has_delta(), "benchmark_pnl: X not filled");
    double sum = 0.0;
    for (std::size_t k = 0; k + 1 < path.y.size(); ++k) sum += path.x[k] * (path.y[k + 1] - path.y[k]);
    return sum;
}

struct HedgeResult {
    std::vector<std::size_t> rebalances;  ///< grid indices; first is 0
    std::size_t trades = 0;               ///< N^n_T, counting the initial trade
    double error = 0.0;                   ///< Z^n_T
    double benchmark = 0.0;               ///< sum X dY
    double discretized = 0.0;             ///< sum X^n dY
    double quadratic_variation = 0.0;     ///< sum ((X^n - X) dY)^2
};

/// Hedging error of rebalancing at `rebalances` instead of every node.
/// Z is accumulated directly as sum (X^n - X) dY so it carries no
/// cancellation from the two large P&L legs.
inline HedgeResult hedging_error(const PathBundle& path, std::span<const std::size_t> rebalances) {
    detail::require(path.has_delta(), "hedging_error: X not filled");
    detail::require(!rebalances.empty() && rebalances.front() == 0, "hedging_error: first rebalance must be at 0");
    const std::size_t m = path.grid.steps();
    for (std::size_t j = 1; j < rebalances.size(); ++j)
        detail::require(rebalances[j] > rebalances[j - 1], "hedging_error: rebalance indices must increase");
    detail::require(rebalances.back() <= m, "hedging_error: rebalance index beyond the grid");

    HedgeResult r;
    r.rebalances.assign(rebalances.begin(), rebalances.end());
    r.trades = rebalances.size();
    std::size_t next = 1;
    double held = path.x[0];
    for (std::size_t k = 0; k < m; ++k) {
        if (next < rebalances.size() && rebalances[next] == k) {
            held = path.x[k];
            ++next;
        }
        const double dy = path.y[k + 1] - path.y[k];
        const double dz = (held - path.x[k]) * dy;
        r.error += dz;
        r.quadratic_variation += dz * dz;
        r.benchmark += path.x[k] * dy;
        r.discretized += held * dy;
    }
    return r;
}

}  // namespace hedgedisc
