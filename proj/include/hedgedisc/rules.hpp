#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "hedgedisc/errors.hpp"
#include "hedgedisc/limit_theory.hpp"
#include "hedgedisc/lq_riccati.hpp"
#include "hedgedisc/process_sim.hpp"

namespace hedgedisc {

/// Barrier distance (in units of epsilon) as a function of (t, Y_t).
using BarrierFn = std::function<double(double t, double y)>;

inline BarrierFn constant_barrier(double level) {
    return [level](double, double) { return level; };
}

/// Rebalance at the grid nodes closest to j * eps^2.
struct EquidistantRule {
    double eps = 0.1;
};

/// Rebalance when X leaves (X_tau - eps * lower(t), X_tau + eps * upper(t)).
struct HittingRule {
    double eps = 0.1;
    BarrierFn lower = constant_barrier(1.0);
    BarrierFn upper = constant_barrier(1.0);
    bool frozen = false;  ///< evaluate the barriers at the last rebalance instead of at t
};

/// Asymmetric barriers |b/sigma^2| e^{+-lambda} oriented with the drift.
struct SharpeRule {
    double eps = 0.1;
    double lambda = 0.0;
    ModelSpec model;
};

/// Barriers built from the controller's running s* target.
struct OptimalEERule {
    double eps = 0.1;
    double delta = 1.0;
    std::shared_ptr<const Controller> controller;
    ModelSpec model;
};

struct Rule {
    std::variant<EquidistantRule, HittingRule, SharpeRule, OptimalEERule> policy;
    double t_min = 0.0;  ///< minimal time between rebalances
    /// Shift the monitored barriers inward by 0.5826 sigma^X sqrt(h) so that
    /// the first grid node outside matches a continuously monitored crossing.
    bool continuity_correction = false;

    [[nodiscard]] double eps() const {
        return std::visit([](const auto& p) { return p.eps; }, policy);
    }
};

/// One rebalance: where, at which delta, which side was hit.
struct RebalanceRecord {
    std::size_t index = 0;
    double time = 0.0;
    double x = 0.0;
    double lower = 0.0;  ///< barrier distance below the previous anchor, X units
    double upper = 0.0;
    int side = 0;        ///< -1 lower exit, +1 upper exit, 0 initial or scheduled
};

struct RuleTrace {
    std::vector<RebalanceRecord> records;
    std::vector<double> lower;   ///< per node, units of eps (hitting variants)
    std::vector<double> upper;
    std::vector<double> ztilde;  ///< per node, optimal rule only
    std::vector<double> s_star;
};

struct RuleOutcome {
    std::vector<std::size_t> rebalances;
    RuleTrace trace;
};

// ---------------------------------------------------------------------------
// Barrier formulas
// ---------------------------------------------------------------------------

/// Exit levels -c e^lambda eps and +c e^-lambda eps around the anchor, with
/// c = b^Y / (sigma^Y)^2, returned as positive distances. For b < 0 the roles
/// of the two sides swap, so lower - upper = c (e^lambda - e^-lambda) always.
inline BarrierPair sharpe_barriers(const ModelSpec& model, double lambda, double t, double y) {
    const double b = model.drift_abs(t, y);
    if (b == 0.0) throw std::invalid_argument("sharpe_barriers: drift vanishes at t = " + std::to_string(t));
    const double vol = model.vol_abs(t, y);
    const double c = b / (vol * vol);
    const double wide = std::abs(c) * std::exp(lambda);
    const double narrow = std::abs(c) * std::exp(-lambda);
    return c > 0.0 ? BarrierPair{wide, narrow} : BarrierPair{narrow, wide};
}

/// lower - upper = s*, lower * upper = 6 delta / (sigma^Y)^2.
inline BarrierPair optimal_ee_barriers(double s_star, double vol_abs, double delta) {
    if (!(delta > 0.0)) throw std::invalid_argument("optimal_ee_barriers: delta must be positive");
    if (!(vol_abs > 0.0)) throw std::invalid_argument("optimal_ee_barriers: volatility must be positive");
    const double product = 6.0 * delta / (vol_abs * vol_abs);
    const double root = std::sqrt(0.25 * s_star * s_star + product);
    if (s_star >= 0.0) {
        const double lower = root + 0.5 * s_star;
        return {lower, product / lower};
    }
    const double upper = root - 0.5 * s_star;
    return {product / upper, upper};
}

namespace detail {

/// delta = 0 limit, used only together with a minimal waiting time.
inline BarrierPair degenerate_ee_barriers(double s_star) {
    return {std::max(s_star, 0.0), std::max(-s_star, 0.0)};
}

constexpr double kContinuityShift = 0.5825971579390106;  // -zeta(1/2) / sqrt(2 pi)

inline std::vector<std::size_t> equidistant_indices(const TimeGrid& grid, double eps) {
    require(eps > 0.0, "equidistant rule: eps must be positive");
    const double spacing = eps * eps;
    const double h = grid.step();
    std::vector<std::size_t> idx;
    for (std::size_t j = 0;; ++j) {
        const double t = static_cast<double>(j) * spacing;
        if (t >= grid.horizon() - 1e-12 * grid.horizon()) break;
        const auto k = static_cast<std::size_t>(std::llround(t / h));
        if (k >= grid.steps()) break;
        if (idx.empty() || k > idx.back()) idx.push_back(k);
    }
    return idx;
}

}  // namespace detail

/// Rebalance times for `rule` on a path whose X is filled.
inline RuleOutcome apply_rule(const Rule& rule, const PathBundle& path) {
    detail::require(path.has_delta(), "apply_rule: X not filled");
    detail::require(rule.t_min >= 0.0, "apply_rule: t_min must be non-negative");
    const double eps = rule.eps();
    detail::require(std::isfinite(eps) && eps > 0.0, "apply_rule: eps must be positive");
    const TimeGrid& grid = path.grid;
    const std::size_t m = grid.steps();

    RuleOutcome out;
    if (const auto* eq = std::get_if<EquidistantRule>(&rule.policy)) {
        out.rebalances = detail::equidistant_indices(grid, eq->eps);
        for (std::size_t k : out.rebalances) out.trace.records.push_back({k, grid.time(k), path.x[k], 0.0, 0.0, 0});
        return out;
    }

    if (rule.continuity_correction)
        detail::require(path.sigma_x.size() == grid.size(), "apply_rule: continuity correction needs sigma_x");

    const auto* hit = std::get_if<HittingRule>(&rule.policy);
    const auto* sharpe = std::get_if<SharpeRule>(&rule.policy);
    const auto* opt = std::get_if<OptimalEERule>(&rule.policy);
    if (sharpe) detail::require(sharpe->lambda >= 0.0, "sharpe rule: lambda must be non-negative");
    if (opt) {
        detail::require(opt->controller != nullptr, "optimal rule: controller missing");
        detail::require(opt->controller->riccati().grid == grid, "optimal rule: controller grid differs from the path grid");
        detail::require(opt->delta > 0.0 || (opt->delta == 0.0 && rule.t_min > 0.0),
                        "optimal rule: delta must be positive (zero only with t_min > 0)");
    }

    ControllerState ctl;
    if (opt) {
        ctl = opt->controller->initial(path.y[0]);
        out.trace.ztilde.resize(grid.size());
        out.trace.s_star.resize(grid.size());
    }
    out.trace.lower.resize(grid.size());
    out.trace.upper.resize(grid.size());

    auto barriers_at = [&](std::size_t k) -> BarrierPair {
        const double t = grid.time(k);
        const double y = path.y[k];
        if (hit) return {hit->lower(t, y), hit->upper(t, y)};
        if (sharpe) return sharpe_barriers(sharpe->model, sharpe->lambda, t, y);
        const double vol = opt->model.vol_abs(t, y);
        return opt->delta > 0.0 ? optimal_ee_barriers(ctl.s_star, vol, opt->delta)
                                : detail::degenerate_ee_barriers(ctl.s_star);
    };
    auto check = [&](const BarrierPair& b, std::size_t k) {
        const bool ok = std::isfinite(b.lower) && std::isfinite(b.upper) &&
                        ((b.lower > 0.0 && b.upper > 0.0) || (opt && opt->delta == 0.0 && b.lower >= 0.0 && b.upper >= 0.0));
        if (!ok)
            throw NumericalError("apply_rule: non-positive barrier (" + std::to_string(b.lower) + ", " +
                                 std::to_string(b.upper) + ") on path " + std::to_string(path.path_id) + " at t = " +
                                 std::to_string(grid.time(k)));
    };

    const double shift_scale = rule.continuity_correction ? detail::kContinuityShift * std::sqrt(grid.step()) : 0.0;
    double anchor = path.x[0];
    double last_time = 0.0;
    BarrierPair frozen_pair{};
    out.rebalances.push_back(0);

    for (std::size_t k = 0; k <= m; ++k) {
        if (opt) {
            if (k > 0) opt->controller->step(ctl, path.y[k - 1], path.y[k]);
            out.trace.ztilde[k] = ctl.z;
            out.trace.s_star[k] = ctl.s_star;
        }
        BarrierPair b = barriers_at(k);
        check(b, k);
        out.trace.lower[k] = b.lower;
        out.trace.upper[k] = b.upper;
        if (k == 0) {
            frozen_pair = b;
            out.trace.records.push_back({0, 0.0, anchor, eps * b.lower, eps * b.upper, 0});
            continue;
        }
        if (k == m) break;  // a trade at maturity has no effect
        const double t = grid.time(k);
        if (t < last_time + rule.t_min - 1e-12) continue;

        const BarrierPair& active = (hit && hit->frozen) ? frozen_pair : b;
        double lo = eps * active.lower;
        double up = eps * active.upper;
        if (shift_scale > 0.0) {
            const double shift = shift_scale * path.sigma_x[k - 1];
            lo = std::max(lo - shift, 0.0);
            up = std::max(up - shift, 0.0);
        }
        const double dx = path.x[k] - anchor;
        int side = 0;
        if (dx <= -lo) side = -1;
        else if (dx >= up) side = 1;
        if (side == 0) continue;

        out.rebalances.push_back(k);
        out.trace.records.push_back({k, t, path.x[k], eps * active.lower, eps * active.upper, side});
        anchor = path.x[k];
        last_time = t;
        frozen_pair = b;
    }
    return out;
}

/// Convenience wrapper for the expectation-error optimal rule.
inline RuleOutcome apply_optimal_ee(const OptimalEERule& rule, const PathBundle& path, double t_min = 0.0,
                                    bool continuity_correction = false) {
    return apply_rule(Rule{rule, t_min, continuity_correction}, path);
}

/// (s, a^2) implied by a hitting-rule trace, or by equidistant sampling.
inline LimitPair limit_pair_for(const Rule& rule, const RuleOutcome& outcome, const PathBundle& path) {
    if (std::holds_alternative<EquidistantRule>(rule.policy)) return limit_pair_equidistant(path.sigma_x);
    if (std::holds_alternative<OptimalEERule>(rule.policy)) {
        // s = s*, a^2 = s*^2 + 6 delta / sigma^2; the product may be zero when delta = 0.
        LimitPair pair;
        pair.provenance = "optimal_ee";
        const auto& lo = outcome.trace.lower;
        const auto& up = outcome.trace.upper;
        pair.s.resize(lo.size());
        pair.a2.resize(lo.size());
        for (std::size_t k = 0; k < lo.size(); ++k) {
            pair.s[k] = lo[k] - up[k];
            pair.a2[k] = pair.s[k] * pair.s[k] + lo[k] * up[k];
        }
        return pair;
    }
    auto pair = limit_pair_from_barriers(outcome.trace.lower, outcome.trace.upper);
    if (std::holds_alternative<SharpeRule>(rule.policy)) pair.provenance = "sharpe";
    return pair;
}

}  // namespace hedgedisc
