#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hedgedisc/curve.hpp"
#include "hedgedisc/errors.hpp"
#include "hedgedisc/process_sim.hpp"

namespace hedgedisc {

// ---------------------------------------------------------------------------
// Lambert W, principal branch on [0, inf)
// ---------------------------------------------------------------------------

namespace detail {

inline double lambert_w_guess(double x) {
    if (x < 3.0) {
        // Winitzki's approximation, good to a few percent on [0, 3].
        const double l = std::log1p(x);
        return l * (1.0 - std::log1p(l) / (2.0 + l));
    }
    const double l1 = std::log(x);
    const double l2 = std::log(l1);
    return l1 - l2 + l2 / l1;
}

}  // namespace detail

/// W(x) with W e^W = x, x >= 0. Halley iteration from a logarithmic start.
inline double lambert_w(double x) {
    if (!(x >= 0.0)) throw std::invalid_argument("lambert_w: argument must be non-negative");
    if (x == 0.0) return 0.0;
    if (std::isinf(x)) return x;
    double w = detail::lambert_w_guess(x);
    for (int iter = 0; iter < 64; ++iter) {
        const double ew = std::exp(w);
        const double f = w * ew - x;
        const double wp1 = w + 1.0;
        const double step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= step;
        if (std::abs(step) <= 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(w))) break;
    }
    return w;
}

/// W(e^log_x), usable when e^log_x would overflow.
inline double lambert_w_of_exp(double log_x) {
    if (log_x < 600.0) return lambert_w(std::exp(log_x));
    // Solve w + log w = log_x by Newton.
    double w = log_x - std::log(log_x);
    for (int iter = 0; iter < 64; ++iter) {
        const double step = (w + std::log(w) - log_x) / (1.0 + 1.0 / w);
        w -= step;
        if (std::abs(step) <= 4.0 * std::numeric_limits<double>::epsilon() * w) break;
    }
    return w;
}

// ---------------------------------------------------------------------------
// Scalar Riccati equation of the Black-Scholes reduction
//   dP/dt = rho^2 P^2 / (P + mu),  P_T = 2 mu
// ---------------------------------------------------------------------------

struct RiccatiSolution {
    TimeGrid grid{1.0, 2};
    double mu = 1.0;
    std::vector<double> p;               ///< P at each node
    std::vector<double> log_derivative;  ///< dP/dt / P at each node
    std::vector<double> g;               ///< linear term; zero in this reduction

    [[nodiscard]] double p0() const { return p.front(); }
    [[nodiscard]] double pT() const { return p.back(); }
    /// P_T / (P_T - P_0); independent of mu.
    [[nodiscard]] double frontier_ratio() const { return pT() / (pT() - p0()); }
};

namespace detail {

inline void require_mu(double mu) { require(std::isfinite(mu) && mu > 0.0, "riccati: mu must be positive"); }

inline RiccatiSolution riccati_shell(const TimeGrid& grid, double mu) {
    RiccatiSolution s;
    s.grid = grid;
    s.mu = mu;
    s.p.resize(grid.size());
    s.log_derivative.resize(grid.size());
    s.g.assign(grid.size(), 0.0);
    return s;
}

inline void fill_log_derivative(RiccatiSolution& s, const Curve& rho2) {
    for (std::size_t k = 0; k < s.p.size(); ++k)
        s.log_derivative[k] = rho2(s.grid.time(k)) * s.p[k] / (s.p[k] + s.mu);
}

}  // namespace detail

/// P_t = mu / W( exp(int_t^T rho^2 ds + 1/2) / 2 ) on every node.
inline RiccatiSolution riccati_closed_form(const Curve& rho2, double mu, const TimeGrid& grid) {
    detail::require_mu(mu);
    detail::require(rho2.min() >= 0.0, "riccati: rho^2 must be non-negative");
    auto s = detail::riccati_shell(grid, mu);
    double tail = 0.0;  // int_{t_k}^T rho^2
    const std::size_t m = grid.steps();
    s.p[m] = 2.0 * mu;
    for (std::size_t k = m; k-- > 0;) {
        tail += rho2.integral(grid.time(k), grid.time(k + 1));
        s.p[k] = mu / lambert_w_of_exp(tail + 0.5 - std::numbers::ln2);
    }
    detail::fill_log_derivative(s, rho2);
    return s;
}

/// Classical RK4 integrated backwards from P_T = 2 mu, `substeps` per grid step.
inline RiccatiSolution riccati_ode(const Curve& rho2, double mu, const TimeGrid& grid, int substeps = 4) {
    detail::require_mu(mu);
    detail::require(substeps >= 1, "riccati_ode: substeps must be >= 1");
    auto s = detail::riccati_shell(grid, mu);
    auto rhs = [&](double t, double p) { return rho2(t) * p * p / (p + mu); };
    const std::size_t m = grid.steps();
    double p = 2.0 * mu;
    s.p[m] = p;
    for (std::size_t k = m; k-- > 0;) {
        const double t1 = grid.time(k + 1);
        const double dt = -(t1 - grid.time(k)) / substeps;
        double t = t1;
        for (int i = 0; i < substeps; ++i) {
            const double k1 = rhs(t, p);
            const double k2 = rhs(t + 0.5 * dt, p + 0.5 * dt * k1);
            const double k3 = rhs(t + 0.5 * dt, p + 0.5 * dt * k2);
            const double k4 = rhs(t + dt, p + dt * k3);
            p += dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
            t += dt;
        }
        if (!std::isfinite(p) || p <= 0.0) throw NumericalError("riccati_ode: solution left (0, inf)");
        s.p[k] = p;
    }
    detail::fill_log_derivative(s, rho2);
    return s;
}

/// rho^2 tabulated on the grid nodes of a Black-Scholes model.
inline Curve rho_squared_curve(const ModelSpec& model, const TimeGrid& grid) {
    const auto nodes = grid.nodes();
    return Curve::tabulate(nodes, [&](double t) {
        const double r = model.drift(t) / model.vol(t);
        return r * r;
    });
}

// ---------------------------------------------------------------------------
// General stochastic LQ problem
//   dX = (A X + B u + f) dt + sum_j D_j u dW_j
//   J  = E[ int 1/2 (X'QX + u'Ru) dt + 1/2 X_T' H X_T ]
// ---------------------------------------------------------------------------

struct LqProblem {
    using MatrixFn = std::function<Eigen::MatrixXd(double)>;
    using VectorFn = std::function<Eigen::VectorXd(double)>;

    Eigen::Index state_dim = 1;
    Eigen::Index control_dim = 1;
    MatrixFn a, b, q, r;
    std::vector<MatrixFn> d;  ///< one n x m matrix per Brownian motion
    VectorFn f;
    Eigen::MatrixXd h;
};

struct LqSolution {
    TimeGrid grid{1.0, 2};
    std::vector<Eigen::MatrixXd> p;
    std::vector<Eigen::VectorXd> g;
    std::vector<Eigen::MatrixXd> k;  ///< R + sum D'PD at each node
    std::vector<Eigen::MatrixXd> b;  ///< B at each node
    double cost_integral = 0.0;      ///< 1/2 int (2 f'g - g'BK^{-1}B'g) dt

    /// u*(t_k, x) = -K^{-1} B' (P x + g)
    [[nodiscard]] Eigen::VectorXd feedback(std::size_t node, const Eigen::VectorXd& x) const {
        return -k[node].llt().solve(b[node].transpose() * (p[node] * x + g[node]));
    }

    /// Optimal cost from the initial state x.
    [[nodiscard]] double optimal_cost(const Eigen::VectorXd& x) const {
        return cost_integral + 0.5 * x.dot(p.front() * x) + x.dot(g.front());
    }
};

namespace detail {

struct LqState {
    Eigen::MatrixXd p;
    Eigen::VectorXd g;
};

inline Eigen::MatrixXd lq_gain_matrix(const LqProblem& pb, double t, const Eigen::MatrixXd& p) {
    Eigen::MatrixXd k = pb.r(t);
    for (const auto& dj : pb.d) {
        const Eigen::MatrixXd dm = dj(t);
        k += dm.transpose() * p * dm;
    }
    return k;
}

inline LqState lq_rhs(const LqProblem& pb, double t, const LqState& s) {
    const Eigen::MatrixXd a = pb.a(t);
    const Eigen::MatrixXd b = pb.b(t);
    const Eigen::MatrixXd k = lq_gain_matrix(pb, t, s.p);
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success)
        throw NumericalError("general_lq_solve: K = R + sum D'PD lost positive definiteness at t = " +
                             std::to_string(t));
    const Eigen::MatrixXd gain = b * llt.solve(b.transpose());  // B K^{-1} B'
    LqState d;
    d.p = -s.p * a - a.transpose() * s.p - pb.q(t) + s.p * gain * s.p;
    d.g = -a.transpose() * s.g + s.p * gain * s.g - s.p * pb.f(t);
    return d;
}

inline LqState lq_axpy(const LqState& s, double c, const LqState& d) { return {s.p + c * d.p, s.g + c * d.g}; }

}  // namespace detail

/// Backward RK4 for the matrix Riccati equation and the linear g equation,
/// checking K > 0 at every evaluation.
inline LqSolution general_lq_solve(const LqProblem& pb, const TimeGrid& grid, int substeps = 4) {
    const auto n = pb.state_dim;
    const auto m = pb.control_dim;
    detail::require(n >= 1 && m >= 1, "general_lq_solve: dimensions must be positive");
    detail::require(pb.a && pb.b && pb.q && pb.r && pb.f, "general_lq_solve: missing coefficient");
    detail::require(pb.h.rows() == n && pb.h.cols() == n, "general_lq_solve: H has the wrong shape");
    detail::require((pb.h - pb.h.transpose()).norm() <= 1e-12 * (1.0 + pb.h.norm()),
                    "general_lq_solve: H must be symmetric");
    {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(pb.h);
        detail::require(eig.eigenvalues().minCoeff() >= -1e-12, "general_lq_solve: H must be positive semidefinite");
    }
    const double t0 = grid.time(0);
    auto check_shape = [&](const Eigen::MatrixXd& mat, Eigen::Index r, Eigen::Index c, const char* what) {
        detail::require(mat.rows() == r && mat.cols() == c, std::string("general_lq_solve: ") + what + " has the wrong shape");
    };
    check_shape(pb.a(t0), n, n, "A");
    check_shape(pb.b(t0), n, m, "B");
    check_shape(pb.q(t0), n, n, "Q");
    check_shape(pb.r(t0), m, m, "R");
    check_shape(pb.f(t0), n, 1, "f");
    for (const auto& dj : pb.d) check_shape(dj(t0), n, m, "D_j");

    LqSolution sol;
    sol.grid = grid;
    const std::size_t steps = grid.steps();
    sol.p.resize(grid.size());
    sol.g.resize(grid.size());
    sol.k.resize(grid.size());
    sol.b.resize(grid.size());

    detail::LqState s{pb.h, Eigen::VectorXd::Zero(n)};
    auto store = [&](std::size_t node) {
        const double t = grid.time(node);
        sol.p[node] = s.p;
        sol.g[node] = s.g;
        sol.k[node] = detail::lq_gain_matrix(pb, t, s.p);
        sol.b[node] = pb.b(t);
        Eigen::LLT<Eigen::MatrixXd> llt(sol.k[node]);
        if (llt.info() != Eigen::Success)
            throw NumericalError("general_lq_solve: K lost positive definiteness at t = " + std::to_string(t));
    };
    store(steps);
    for (std::size_t node = steps; node-- > 0;) {
        const double t1 = grid.time(node + 1);
        const double dt = -(t1 - grid.time(node)) / substeps;
        double t = t1;
        for (int i = 0; i < substeps; ++i) {
            const auto k1 = detail::lq_rhs(pb, t, s);
            const auto k2 = detail::lq_rhs(pb, t + 0.5 * dt, detail::lq_axpy(s, 0.5 * dt, k1));
            const auto k3 = detail::lq_rhs(pb, t + 0.5 * dt, detail::lq_axpy(s, 0.5 * dt, k2));
            const auto k4 = detail::lq_rhs(pb, t + dt, detail::lq_axpy(s, dt, k3));
            s.p += dt / 6.0 * (k1.p + 2.0 * k2.p + 2.0 * k3.p + k4.p);
            s.g += dt / 6.0 * (k1.g + 2.0 * k2.g + 2.0 * k3.g + k4.g);
            t += dt;
        }
        if (!s.p.allFinite() || !s.g.allFinite()) throw NumericalError("general_lq_solve: solution overflowed");
        store(node);
    }

    // Trapezoidal rule for the g-dependent part of the optimal cost.
    auto integrand = [&](std::size_t node) {
        const Eigen::VectorXd& g = sol.g[node];
        const Eigen::VectorXd bg = sol.b[node].transpose() * g;
        return 2.0 * pb.f(grid.time(node)).dot(g) - bg.dot(sol.k[node].llt().solve(bg));
    };
    double integral = 0.0;
    for (std::size_t node = 0; node < steps; ++node)
        integral += 0.5 * (integrand(node) + integrand(node + 1)) * (grid.time(node + 1) - grid.time(node));
    sol.cost_integral = 0.5 * integral;
    return sol;
}

/// The Black-Scholes reduction written as a general LQ problem: state
/// Z~, control u = s Y, A = 0, B = b/3, D = sigma/3, Q = 0, R = mu (sigma/3)^2,
/// H = 2 mu, f = 0. Its P coincides with the scalar Riccati solution.
inline LqProblem black_scholes_lq_problem(const ModelSpec& model, double mu) {
    using Eigen::MatrixXd;
    LqProblem pb;
    pb.a = [](double) { return MatrixXd::Zero(1, 1); };
    pb.b = [drift = model.drift](double t) { return MatrixXd::Constant(1, 1, drift(t) / 3.0); };
    pb.d = {[vol = model.vol](double t) { return MatrixXd::Constant(1, 1, vol(t) / 3.0); }};
    pb.q = [](double) { return MatrixXd::Zero(1, 1); };
    pb.r = [vol = model.vol, mu](double t) {
        const double sd = vol(t) / 3.0;
        return MatrixXd::Constant(1, 1, mu * sd * sd);
    };
    pb.f = [](double) { return Eigen::VectorXd::Zero(1); };
    pb.h = MatrixXd::Constant(1, 1, 2.0 * mu);
    return pb;
}

// ---------------------------------------------------------------------------
// Observable controller Z~ and the optimal skewness target s*
// ---------------------------------------------------------------------------

struct ControllerState {
    double z = 0.0;       ///< Z~ (currency)
    double s_star = 0.0;  ///< target s* (X units)
    std::size_t node = 0;
};

/// Drives Z~ with the multiplicative scheme
///   Z~_{i+1} = Z~_i (1 - (1/b_i)(P'/P)_i (Y_{i+1} - Y_i) / Y_i)
/// and reads off s*_t = -3 (P'/P)_t Z~_t / (b_t Y_t).
class Controller {
public:
    Controller(std::shared_ptr<const RiccatiSolution> riccati, Curve drift)
        : riccati_(std::move(riccati)), drift_(std::move(drift)) {
        detail::require(riccati_ != nullptr, "controller: missing Riccati solution");
        for (double t : riccati_->grid.nodes())
            if (drift_(t) == 0.0) throw std::invalid_argument("controller: drift must not vanish");
    }

    [[nodiscard]] const RiccatiSolution& riccati() const { return *riccati_; }
    [[nodiscard]] double mu() const { return riccati_->mu; }

    [[nodiscard]] ControllerState initial(double y0) const {
        ControllerState s;
        s.z = -1.0 / (2.0 * mu());
        s.node = 0;
        s.s_star = target(0, y0, s.z);
        return s;
    }

    /// Advance from node k (price y_now) to node k+1 (price y_next).
    void step(ControllerState& s, double y_now, double y_next) const {
        if (!(y_now > 0.0)) throw std::invalid_argument("controller_step: price must be positive");
        const std::size_t k = s.node;
        detail::require(k < riccati_->grid.steps(), "controller_step: already at maturity");
        const double b = drift_(riccati_->grid.time(k));
        s.z *= 1.0 - riccati_->log_derivative[k] / b * (y_next - y_now) / y_now;
        if (!std::isfinite(s.z)) throw NumericalError("controller: Z~ overflowed");
        s.node = k + 1;
        s.s_star = target(s.node, y_next, s.z);
    }

    [[nodiscard]] double target(std::size_t node, double y, double z) const {
        const double b = drift_(riccati_->grid.time(node));
        return -3.0 * riccati_->log_derivative[node] * z / (b * y);
    }

private:
    std::shared_ptr<const RiccatiSolution> riccati_;
    Curve drift_;
};

// ---------------------------------------------------------------------------
// Efficient frontier
// ---------------------------------------------------------------------------

struct FrontierPoint {
    double m = 0.0;   ///< E[Z]
    double v = 0.0;   ///< E[Z^2]
    double mu = 0.0;  ///< multiplier producing this point
    double expected_ztilde = 0.0;  ///< E[Z~_T] = -(1/2mu) P_0/P_T
};

struct Frontier {
    double ratio = 0.0;        ///< P_T / (P_T - P_0)
    double p_ratio = 0.0;      ///< P_0 / P_T
    std::vector<FrontierPoint> points;
};

/// Efficient (m, v) couples for target expectations `targets`.
inline Frontier frontier(const Curve& rho2, const TimeGrid& grid, std::span<const double> targets) {
    const auto sol = riccati_closed_form(rho2, 1.0, grid);
    const double p_ratio = sol.p0() / sol.pT();
    if (!(p_ratio < 1.0)) throw std::invalid_argument("frontier: Sharpe ratio vanishes, the frontier is degenerate");
    Frontier fr;
    fr.p_ratio = p_ratio;
    fr.ratio = 1.0 / (1.0 - p_ratio);
    for (double m : targets) {
        detail::require(m > 0.0, "frontier: target expectations must be positive");
        FrontierPoint pt;
        pt.m = m;
        pt.v = m * m * fr.ratio;
        pt.mu = (1.0 - p_ratio) / (2.0 * m);
        pt.expected_ztilde = -p_ratio / (2.0 * pt.mu);
        fr.points.push_back(pt);
    }
    return fr;
}

}  // namespace hedgedisc
