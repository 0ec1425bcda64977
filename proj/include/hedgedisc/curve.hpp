#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "hedgedisc/errors.hpp"

namespace hedgedisc {

/// Deterministic function of time given by knots and linear interpolation.
/// Outside the knot range the end values are held constant.
class Curve {
public:
    Curve() : Curve(0.0) {}

    /// Constant curve.
    explicit Curve(double value) : times_{0.0}, values_{value} {}

    Curve(std::vector<double> times, std::vector<double> values)
        : times_(std::move(times)), values_(std::move(values)) {
        detail::require(!times_.empty(), "curve needs at least one knot");
        detail::require(times_.size() == values_.size(), "curve times/values size mismatch");
        for (std::size_t i = 1; i < times_.size(); ++i)
            detail::require(times_[i] > times_[i - 1], "curve knot times must be strictly increasing");
        for (double v : values_)
            detail::require(std::isfinite(v), "curve values must be finite");
    }

    /// Tabulate `f` at the given nodes.
    template <class F>
    static Curve tabulate(std::span<const double> nodes, F&& f) {
        std::vector<double> t(nodes.begin(), nodes.end());
        std::vector<double> v(t.size());
        std::transform(t.begin(), t.end(), v.begin(), f);
        return Curve(std::move(t), std::move(v));
    }

    [[nodiscard]] bool is_constant() const { return times_.size() == 1; }
    [[nodiscard]] std::span<const double> times() const { return times_; }
    [[nodiscard]] std::span<const double> values() const { return values_; }

    [[nodiscard]] double operator()(double t) const {
        if (t <= times_.front()) return values_.front();
        if (t >= times_.back()) return values_.back();
        const std::size_t i = segment(t);
        const double w = (t - times_[i]) / (times_[i + 1] - times_[i]);
        return values_[i] + w * (values_[i + 1] - values_[i]);
    }

    [[nodiscard]] double min() const { return *std::min_element(values_.begin(), values_.end()); }
    [[nodiscard]] double max() const { return *std::max_element(values_.begin(), values_.end()); }

    /// Exact integral of the piecewise-linear interpolant over [lo, hi].
    [[nodiscard]] double integral(double lo, double hi) const {
        return piecewise(lo, hi, [](double f0, double f1, double dt) { return 0.5 * (f0 + f1) * dt; });
    }

    /// Exact integral of the squared interpolant over [lo, hi].
    [[nodiscard]] double squared_integral(double lo, double hi) const {
        return piecewise(lo, hi, [](double f0, double f1, double dt) {
            return (f0 * f0 + f0 * f1 + f1 * f1) * dt / 3.0;
        });
    }

private:
    std::size_t segment(double t) const {
        auto it = std::upper_bound(times_.begin(), times_.end(), t);
        return static_cast<std::size_t>(std::distance(times_.begin(), it)) - 1;
    }

    template <class Rule>
    double piecewise(double lo, double hi, Rule rule) const {
        if (hi <= lo) return 0.0;
        // Breakpoints: the interval ends plus every knot strictly inside.
        double sum = 0.0;
        double a = lo;
        auto it = std::upper_bound(times_.begin(), times_.end(), lo);
        while (a < hi) {
            double b = (it != times_.end() && *it < hi) ? *it : hi;
            sum += rule((*this)(a), (*this)(b), b - a);
            a = b;
            if (it != times_.end() && *it <= a) ++it;
        }
        return sum;
    }

    std::vector<double> times_;
    std::vector<double> values_;
};

/// Integral of `curve` over [t_lo, t_hi] restricted to the horizon [0, horizon].
inline double integrated_curve(const Curve& curve, double t_lo, double t_hi, double horizon) {
    if (!(t_lo >= 0.0 && t_lo <= t_hi && t_hi <= horizon))
        throw std::invalid_argument("integrated_curve: need 0 <= t_lo <= t_hi <= T, got [" +
                                    std::to_string(t_lo) + ", " + std::to_string(t_hi) + "]");
    return curve.integral(t_lo, t_hi);
}

}  // namespace hedgedisc
