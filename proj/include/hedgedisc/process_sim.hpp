#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hedgedisc/curve.hpp"
#include "hedgedisc/errors.hpp"
#include "hedgedisc/rng.hpp"

namespace hedgedisc {

/// Uniform grid t_k = k T / M on [0, T].
class TimeGrid {
public:
    TimeGrid(double horizon, std::size_t steps) : horizon_(horizon), steps_(steps) {
        detail::require(std::isfinite(horizon) && horizon > 0.0, "time grid horizon must be positive");
        detail::require(steps >= 2, "time grid needs at least 2 steps");
    }

    /// Smallest grid with h <= scale^2 / oversample.
    static TimeGrid resolving(double horizon, double scale, double oversample) {
        detail::require(scale > 0.0 && oversample > 0.0, "grid resolution parameters must be positive");
        const double h = scale * scale / oversample;
        const auto steps = static_cast<std::size_t>(std::ceil(horizon / h - 1e-9));
        return TimeGrid(horizon, std::max<std::size_t>(steps, 2));
    }

    [[nodiscard]] double horizon() const { return horizon_; }
    [[nodiscard]] std::size_t steps() const { return steps_; }
    [[nodiscard]] std::size_t size() const { return steps_ + 1; }
    [[nodiscard]] double step() const { return horizon_ / static_cast<double>(steps_); }
    [[nodiscard]] double time(std::size_t k) const {
        return k == steps_ ? horizon_ : static_cast<double>(k) * step();
    }
    [[nodiscard]] std::vector<double> nodes() const {
        std::vector<double> t(size());
        for (std::size_t k = 0; k < t.size(); ++k) t[k] = time(k);
        return t;
    }

    bool operator==(const TimeGrid&) const = default;

private:
    double horizon_;
    std::size_t steps_;
};

enum class ModelKind { black_scholes, general_diffusion };

/// Dynamics of the underlying.
///
/// Black-Scholes kind: dY = Y (b_t dt + sigma_t dW) with tabulated curves.
/// General diffusion: dY = drift(t, Y) dt + vol(t, Y) dW in absolute terms.
/// The curves b_t and sigma_t are kept for both kinds; for the general kind
/// they are informational (used for the Sharpe-ratio quadrature only).
struct ModelSpec {
    using Coefficient = std::function<double(double t, double y)>;

    ModelKind kind = ModelKind::black_scholes;
    double y0 = 100.0;
    Curve drift{0.0};
    Curve vol{0.2};
    Coefficient drift_fn;
    Coefficient vol_fn;
    bool allow_degenerate = false;  ///< admit vol == 0 (general diffusion test mode)

    static ModelSpec black_scholes(double y0, Curve drift, Curve vol) {
        ModelSpec m;
        m.kind = ModelKind::black_scholes;
        m.y0 = y0;
        m.drift = std::move(drift);
        m.vol = std::move(vol);
        return m;
    }

    static ModelSpec general_diffusion(double y0, Coefficient drift_fn, Coefficient vol_fn,
                                       bool allow_degenerate = false) {
        ModelSpec m;
        m.kind = ModelKind::general_diffusion;
        m.y0 = y0;
        m.drift_fn = std::move(drift_fn);
        m.vol_fn = std::move(vol_fn);
        m.allow_degenerate = allow_degenerate;
        return m;
    }

    /// b^Y(t, y)
    [[nodiscard]] double drift_abs(double t, double y) const {
        return kind == ModelKind::black_scholes ? drift(t) * y : drift_fn(t, y);
    }
    /// sigma^Y(t, y)
    [[nodiscard]] double vol_abs(double t, double y) const {
        return kind == ModelKind::black_scholes ? vol(t) * y : vol_fn(t, y);
    }
    /// rho = b^Y / sigma^Y
    [[nodiscard]] double sharpe(double t, double y) const {
        return kind == ModelKind::black_scholes ? drift(t) / vol(t) : drift_fn(t, y) / vol_fn(t, y);
    }

    void validate() const {
        detail::require(std::isfinite(y0) && y0 > 0.0, "model: initial price must be positive");
        if (kind == ModelKind::black_scholes) {
            detail::require(vol.min() > 0.0, "model: volatility curve must be positive");
        } else {
            detail::require(static_cast<bool>(drift_fn) && static_cast<bool>(vol_fn),
                            "model: general diffusion needs drift and volatility functions");
            if (!allow_degenerate)
                detail::require(vol_fn(0.0, y0) > 0.0, "model: volatility must be positive");
        }
    }
};

/// One simulated trajectory on a grid. `x` and `sigma_x` are filled by the
/// delta module and are empty until then.
struct PathBundle {
    TimeGrid grid{1.0, 2};
    std::vector<double> y;
    std::vector<double> x;
    std::vector<double> sigma_x;
    std::uint64_t path_id = 0;
    std::uint64_t seed = 0;

    [[nodiscard]] bool has_delta() const { return x.size() == grid.size(); }
};

/// Generates paths for one (model, grid) pair. Step coefficients are cached
/// at construction; `simulate` is const and safe to call concurrently.
class PathSimulator {
public:
    PathSimulator(ModelSpec model, TimeGrid grid) : model_(std::move(model)), grid_(grid) {
        model_.validate();
        if (model_.kind == ModelKind::black_scholes) {
            const std::size_t m = grid_.steps();
            log_drift_.resize(m);
            step_sd_.resize(m);
            for (std::size_t k = 0; k < m; ++k) {
                const double lo = grid_.time(k);
                const double hi = grid_.time(k + 1);
                const double var = model_.vol.squared_integral(lo, hi);
                log_drift_[k] = model_.drift.integral(lo, hi) - 0.5 * var;
                step_sd_[k] = std::sqrt(var);
            }
        }
    }

    [[nodiscard]] const ModelSpec& model() const { return model_; }
    [[nodiscard]] const TimeGrid& grid() const { return grid_; }

    /// Fill `out` with path `path_id`; `out`'s buffers are reused.
    void simulate(std::uint64_t seed, std::uint64_t path_id, PathBundle& out) const {
        PathRng rng(seed, path_id);
        out.grid = grid_;
        out.path_id = path_id;
        out.seed = seed;
        out.x.clear();
        out.sigma_x.clear();
        out.y.resize(grid_.size());
        out.y[0] = model_.y0;
        if (model_.kind == ModelKind::black_scholes) {
            double log_y = std::log(model_.y0);
            for (std::size_t k = 0; k < grid_.steps(); ++k) {
                log_y += log_drift_[k] + step_sd_[k] * rng.normal();
                out.y[k + 1] = std::exp(log_y);
            }
        } else {
            const double h = grid_.step();
            const double sqrt_h = std::sqrt(h);
            for (std::size_t k = 0; k < grid_.steps(); ++k) {
                const double t = grid_.time(k);
                const double y = out.y[k];
                out.y[k + 1] = y + model_.drift_fn(t, y) * h + model_.vol_fn(t, y) * sqrt_h * rng.normal();
            }
        }
    }

    [[nodiscard]] PathBundle simulate(std::uint64_t seed, std::uint64_t path_id) const {
        PathBundle p;
        simulate(seed, path_id, p);
        return p;
    }

    /// Drive the path with caller-supplied standard normals (one per step).
    [[nodiscard]] PathBundle simulate_with_noise(std::span<const double> normals) const {
        detail::require(normals.size() == grid_.steps(), "noise length must equal the step count");
        PathBundle out;
        out.grid = grid_;
        out.y.resize(grid_.size());
        out.y[0] = model_.y0;
        const double h = grid_.step();
        for (std::size_t k = 0; k < grid_.steps(); ++k) {
            const double y = out.y[k];
            if (model_.kind == ModelKind::black_scholes) {
                out.y[k + 1] = y * std::exp(log_drift_[k] + step_sd_[k] * normals[k]);
            } else {
                const double t = grid_.time(k);
                out.y[k + 1] = y + model_.drift_fn(t, y) * h + model_.vol_fn(t, y) * std::sqrt(h) * normals[k];
            }
        }
        return out;
    }

private:
    ModelSpec model_;
    TimeGrid grid_;
    std::vector<double> log_drift_;
    std::vector<double> step_sd_;
};

/// Paths 0 .. n_paths-1 for a master seed.
inline std::vector<PathBundle> simulate_paths(const ModelSpec& model, const TimeGrid& grid,
                                              std::uint64_t seed, std::size_t n_paths) {
    detail::require(n_paths >= 1, "simulate_paths: need at least one path");
    const PathSimulator sim(model, grid);
    std::vector<PathBundle> paths(n_paths);
    for (std::size_t i = 0; i < n_paths; ++i) sim.simulate(seed, i, paths[i]);
    return paths;
}

}  // namespace hedgedisc
