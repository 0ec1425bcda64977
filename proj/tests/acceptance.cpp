// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   acceptance [--only N[,N...]] [--threads n]
//
// Tolerances and sample sizes are pinned below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "hedgedisc/harness.hpp"

namespace hd = hedgedisc;

namespace {

unsigned g_threads = 1;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double x, int digits = 6) {
    std::ostringstream os;
    os << std::setprecision(digits) << x;
    return os.str();
}

hd::ExperimentConfig config(const std::string& text) { return hd::parse_config(text, "acceptance"); }

hd::RunOptions run_options() { return {g_threads, nullptr}; }

// ---------------------------------------------------------------------------
// 1. Limit-moment convergence, symmetric barriers
// ---------------------------------------------------------------------------

constexpr std::size_t kC1Paths = 100000;
constexpr double kC1Sigmas = 3.0;
// A later eps may sit further from its target than the previous one by at
// most this many standard errors before the trend counts as non-monotone.
constexpr double kC1TrendSlack = 2.0;

Outcome limit_moment_convergence() {
    auto cfg = config(R"({
        "model": {"kind": "black_scholes", "y0": 100, "horizon": 1, "drift": 0.1, "vol": 0.2},
        "delta": {"strike": 100},
        "rule": {"variant": "hitting", "lower": 1, "upper": 1},
        "eps": [0.4, 0.2, 0.1, 0.05], "oversample": 128, "mc": {"seed": 20240101}})");
    cfg.paths = kC1Paths;
    const auto t = hd::run_convergence(cfg, run_options());
    const std::size_t last = t.rows.size() - 1;
    const double mz = t.at(last, "m_z"), vz = t.at(last, "v_z");
    bool monotone = true;
    std::string trend;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const double dm = std::abs(t.at(i, "m_hat") - t.at(i, "m_limit"));
        const double dv = std::abs(t.at(i, "v_hat") - t.at(i, "v_limit"));
        if (i > 0) {
            const double dm_prev = std::abs(t.at(i - 1, "m_hat") - t.at(i - 1, "m_limit"));
            const double dv_prev = std::abs(t.at(i - 1, "v_hat") - t.at(i - 1, "v_limit"));
            if (dm > dm_prev + kC1TrendSlack * t.at(i, "m_se")) monotone = false;
            if (dv > dv_prev + kC1TrendSlack * t.at(i, "v_se")) monotone = false;
        }
        trend += " eps=" + fmt(t.at(i, "eps")) + ":m=" + fmt(t.at(i, "m_hat"), 4) + "/" + fmt(t.at(i, "m_limit"), 4) +
                 ",v=" + fmt(t.at(i, "v_hat"), 4) + "/" + fmt(t.at(i, "v_limit"), 4);
    }
    const bool pass = std::abs(mz) <= kC1Sigmas && std::abs(vz) <= kC1Sigmas && monotone;
    return {pass, "m_z=" + fmt(mz, 3) + " v_z=" + fmt(vz, 3) + " monotone=" + (monotone ? "yes" : "no") + ";" + trend};
}

// ---------------------------------------------------------------------------
// 2. Equidistant rule second moment
// ---------------------------------------------------------------------------

constexpr std::size_t kC2Paths = 40000;
constexpr std::size_t kC2OraclePaths = 40000;
constexpr std::size_t kC2OracleSteps = 2000;
constexpr double kC2RelTol = 0.05;

// (1/2) E int (sigma^X sigma^Y)^2 dt by trapezoid quadrature along independent paths.
hd::Estimate equidistant_target(const hd::ModelSpec& model, const hd::DeltaSpec& spec, std::uint64_t seed) {
    const hd::TimeGrid grid(1.0, kC2OracleSteps);
    const hd::PathSimulator sim(model, grid);
    std::vector<double> per_path(kC2OraclePaths);
    hd::parallel_for(kC2OraclePaths, g_threads, [&](std::size_t i) {
        const auto p = sim.simulate(seed, i);
        double sum = 0.0;
        for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
            auto integrand = [&](std::size_t j) {
                const double t = grid.time(j);
                if (t >= spec.maturity) return 0.0;
                const double vy = model.vol_abs(t, p.y[j]);
                const double vx = hd::bs_delta_sensitivity(t, p.y[j], spec) * vy;
                return vx * vx * vy * vy;
            };
            sum += 0.5 * (integrand(k) + integrand(k + 1)) * grid.step();
        }
        per_path[i] = 0.5 * sum;
    });
    return hd::estimate(per_path);
}

Outcome equidistant_second_moment() {
    auto cfg = config(R"({
        "model": {"kind": "black_scholes", "y0": 100, "horizon": 1, "drift": 0.1, "vol": 0.2},
        "delta": {"strike": 100},
        "rule": {"variant": "equidistant"},
        "eps": [0.05], "oversample": 128, "mc": {"seed": 20240202}})");
    cfg.paths = kC2Paths;
    const auto t = hd::run_convergence(cfg, run_options());
    const auto target = equidistant_target(cfg.model, cfg.delta, 777);
    const double v = t.at(0, "v_hat");
    const double rel = std::abs(v - target.mean) / target.mean;
    return {rel <= kC2RelTol, "v_hat=" + fmt(v) + " (se " + fmt(t.at(0, "v_se"), 3) + ") target=" + fmt(target.mean) +
                                  " (se " + fmt(target.se, 3) + ") rel_err=" + fmt(rel, 3)};
}

// ---------------------------------------------------------------------------
// 3. Exit-probability identity
// ---------------------------------------------------------------------------

constexpr std::size_t kC3MinExcursions = 100000;
constexpr double kC3Sigmas = 3.0;
// The delta of a call drifts at -sigma sigma^X under a driftless price, which
// moves the exit split by O(eps); at this eps the shift is below one standard
// error of the sample.
constexpr double kC3Eps = 0.005;
constexpr double kC3Oversample = 128.0;
constexpr std::size_t kC3Batch = 4;

Outcome exit_probability() {
    // Driftless Black-Scholes, barriers lower = 2, upper = 1 around the last anchor.
    const auto model = hd::ModelSpec::black_scholes(100.0, hd::Curve(0.0), hd::Curve(0.2));
    const hd::DeltaSpec spec{100.0, 0.2, 1.0};
    const auto grid = hd::TimeGrid::resolving(1.0, kC3Eps, kC3Oversample);
    const hd::PathSimulator sim(model, grid);
    hd::Rule rule;
    hd::HittingRule h{kC3Eps};
    h.lower = hd::constant_barrier(2.0);
    h.upper = hd::constant_barrier(1.0);
    rule.policy = h;
    rule.continuity_correction = true;

    std::vector<double> up, total;
    std::size_t excursions = 0;
    std::size_t next = 0;
    while (excursions < kC3MinExcursions) {
        std::vector<double> u(kC3Batch), n(kC3Batch);
        hd::parallel_for(kC3Batch, g_threads, [&](std::size_t i) {
            auto p = sim.simulate(31337, next + i);
            hd::delta_path(p, spec, model);
            const auto out = hd::apply_rule(rule, p);
            for (const auto& r : out.trace.records) {
                if (r.side == 0) continue;
                n[i] += 1.0;
                if (r.side > 0) u[i] += 1.0;
            }
        });
        next += kC3Batch;
        for (std::size_t i = 0; i < kC3Batch; ++i) {
            up.push_back(u[i]);
            total.push_back(n[i]);
            excursions += static_cast<std::size_t>(n[i]);
        }
    }
    // Ratio estimator clustered by path.
    const double p_up = hd::pairwise_sum(up) / hd::pairwise_sum(total);
    std::vector<double> resid(up.size());
    for (std::size_t i = 0; i < up.size(); ++i) resid[i] = up[i] - p_up * total[i];
    const double mean_n = hd::pairwise_sum(total) / static_cast<double>(total.size());
    const double se = std::sqrt(hd::sample_covariance(resid, resid) / static_cast<double>(up.size())) / mean_n;
    // Started between -2 and +1, Brownian motion reaches +1 first with probability 2/3.
    constexpr double kUpper = 2.0 / 3.0;
    const double z = (p_up - kUpper) / se;
    return {std::abs(z) <= kC3Sigmas, "excursions=" + std::to_string(excursions) + " P(lower first)=" + fmt(1.0 - p_up) +
                                          " (target 1/3) P(upper first)=" + fmt(p_up) + " (target 2/3) se=" +
                                          fmt(se, 3) + " z=" + fmt(z, 3)};
}

// ---------------------------------------------------------------------------
// 4. Barrier algebra round trip
// ---------------------------------------------------------------------------

constexpr std::size_t kC4Pairs = 10000;
constexpr double kC4Tol = 1e-12;

Outcome barrier_round_trip() {
    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> skew(-5.0, 5.0);
    std::uniform_real_distribution<double> log_gap(-6.0, 2.0);
    double worst = 0.0;
    for (std::size_t i = 0; i < kC4Pairs; ++i) {
        const double s = skew(gen);
        const double a2 = s * s + std::pow(10.0, log_gap(gen));
        const auto b = hd::barriers_from_limit_pair(s, a2);
        const auto back = hd::limit_pair_from_barriers(b.lower, b.upper);
        worst = std::max({worst, std::abs(back.s - s) / std::max(1.0, std::abs(s)),
                          std::abs(back.a2 - a2) / std::max(1.0, a2)});
    }
    return {worst <= kC4Tol, "pairs=" + std::to_string(kC4Pairs) + " max_rel_err=" + fmt(worst, 3)};
}

// ---------------------------------------------------------------------------
// 5. Sharpe sweep
// ---------------------------------------------------------------------------

constexpr std::size_t kC5Paths = 2500;
constexpr double kC5Sigmas = 3.0;
constexpr double kC5MinRatioAt3 = 0.95;

Outcome sharpe_sweep() {
    // rho = b / sigma = 0.5 on [0, 1].
    auto cfg = config(R"({
        "model": {"kind": "black_scholes", "y0": 1, "horizon": 1, "drift": 0.1, "vol": 0.2},
        "delta": {"strike": 1},
        "rule": {"variant": "sharpe", "lambdas": [0, 1, 2], "continuity_correction": true},
        "eps": [0.01], "oversample": 32, "max_steps": 100000000, "mc": {"seed": 20240505}})");
    cfg.paths = kC5Paths;
    const double bound = std::sqrt(6.0) / 3.0 * 0.5;
    bool monotone = true;
    double prev = -1.0;
    for (int i = 0; i <= 1000; ++i) {
        const double s = hd::sharpe_rule_ratio(i * 0.005, bound);
        if (s < prev) monotone = false;
        prev = s;
    }
    const double ratio3 = hd::sharpe_rule_ratio(3.0, bound) / bound;
    const auto t = hd::run_sharpe_sweep(cfg, run_options());
    bool within = true;
    std::string rows;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const double z = t.at(i, "sharpe_z");
        if (!(std::abs(z) <= kC5Sigmas)) within = false;
        rows += " lambda=" + fmt(t.at(i, "lambda")) + ":S_hat=" + fmt(t.at(i, "sharpe_hat"), 4) + "(se " +
                fmt(t.at(i, "sharpe_se"), 2) + ")/S=" + fmt(t.at(i, "sharpe_analytic"), 4) + ",z=" + fmt(z, 3);
    }
    const bool pass = monotone && ratio3 >= kC5MinRatioAt3 && within;
    return {pass, "analytic_monotone=" + std::string(monotone ? "yes" : "no") + " S(3)/bound=" + fmt(ratio3) + ";" + rows};
}

// ---------------------------------------------------------------------------
// 6. Lambert W
// ---------------------------------------------------------------------------

constexpr std::size_t kC6Points = 200001;
constexpr double kC6ResidualTol = 1e-13;
constexpr double kC6AtETol = 1e-14;

Outcome lambert_w() {
    double worst = 0.0;
    for (std::size_t i = 0; i < kC6Points; ++i) {
        const double x = std::pow(10.0, -8.0 + 16.0 * static_cast<double>(i) / (kC6Points - 1));
        const double w = hd::lambert_w(x);
        worst = std::max(worst, std::abs(w * std::exp(w) - x) / std::max(1.0, x));
    }
    const double at_e = std::abs(hd::lambert_w(std::numbers::e) - 1.0);
    return {worst <= kC6ResidualTol && at_e <= kC6AtETol,
            "max |w e^w - x| / max(1, x)=" + fmt(worst, 3) + " |L(e) - 1|=" + fmt(at_e, 3)};
}

// ---------------------------------------------------------------------------
// 7. Riccati closed form against an RK4 oracle
// ---------------------------------------------------------------------------

constexpr double kC7Tol = 1e-8;
constexpr std::size_t kC7Steps = 1000;
constexpr int kC7Substeps = 8;

std::vector<std::pair<std::string, std::function<double(double)>>> rho2_cases() {
    return {{"constant", [](double) { return 0.25; }},
            {"linear", [](double t) { return 0.05 + 0.55 * t; }},
            {"bump", [](double t) { return 0.1 + 0.8 * std::exp(-std::pow((t - 0.5) / 0.1, 2)); }}};
}

// P' = rho^2 P^2 / (P + mu) backwards from P_T = 2 mu, with rho^2 evaluated exactly.
std::vector<double> rk4_oracle(const std::function<double(double)>& rho2, double mu, const hd::TimeGrid& grid) {
    auto rhs = [&](double t, double p) { return rho2(t) * p * p / (p + mu); };
    std::vector<double> out(grid.size());
    double p = 2.0 * mu;
    out.back() = p;
    for (std::size_t k = grid.steps(); k-- > 0;) {
        const double dt = -grid.step() / kC7Substeps;
        double t = grid.time(k + 1);
        for (int i = 0; i < kC7Substeps; ++i) {
            const double k1 = rhs(t, p), k2 = rhs(t + dt / 2, p + dt / 2 * k1), k3 = rhs(t + dt / 2, p + dt / 2 * k2),
                         k4 = rhs(t + dt, p + dt * k3);
            p += dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6;
            t += dt;
        }
        out[k] = p;
    }
    return out;
}

hd::Curve fine_curve(const std::function<double(double)>& f) {
    std::vector<double> t(20001);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i) / (t.size() - 1);
    return hd::Curve::tabulate(t, f);
}

Outcome riccati_vs_rk4() {
    const hd::TimeGrid grid(1.0, kC7Steps);
    double worst = 0.0;
    for (const auto& [name, f] : rho2_cases()) {
        const auto curve = fine_curve(f);
        for (double mu : {0.5, 1.0, 2.0}) {
            const auto closed = hd::riccati_closed_form(curve, mu, grid);
            const auto oracle = rk4_oracle(f, mu, grid);
            for (std::size_t k = 0; k < grid.size(); ++k)
                worst = std::max(worst, std::abs(closed.p[k] - oracle[k]) / oracle[k]);
        }
    }
    return {worst <= kC7Tol, "curves=constant,linear,bump mu=0.5,1,2 max_rel_err=" + fmt(worst, 3)};
}

// ---------------------------------------------------------------------------
// 8. Frontier mu-invariance
// ---------------------------------------------------------------------------

constexpr double kC8Tol = 1e-10;

Outcome frontier_invariance() {
    const hd::TimeGrid grid(1.0, kC7Steps);
    double worst = 0.0;
    std::string ratios;
    for (const auto& [name, f] : rho2_cases()) {
        const auto curve = fine_curve(f);
        const double ref = hd::riccati_closed_form(curve, 1.0, grid).frontier_ratio();
        for (double mu : {0.5, 1.0, 2.0})
            worst = std::max(worst, std::abs(hd::riccati_closed_form(curve, mu, grid).frontier_ratio() - ref) / ref);
        ratios += " " + name + "=" + fmt(ref, 8);
    }
    return {worst <= kC8Tol, "max_rel_spread=" + fmt(worst, 3) + ";" + ratios};
}

// ---------------------------------------------------------------------------
// 9. Controller moments and the optimal rule
// ---------------------------------------------------------------------------

constexpr std::size_t kC9Paths = 4000;
constexpr double kC9Sigmas = 3.0;

Outcome controller_moments() {
    auto cfg = config(R"({
        "model": {"kind": "black_scholes", "y0": 1, "horizon": 1, "drift": 0.1, "vol": 0.2},
        "delta": {"strike": 1},
        "rule": {"variant": "optimal_ee", "continuity_correction": true},
        "frontier": {"m": [0.1], "delta": 0.005},
        "eps": [0.05], "oversample": 32, "max_steps": 100000000, "mc": {"seed": 20240909}})");
    cfg.paths = kC9Paths;
    const auto t = hd::run_frontier(cfg, run_options());
    const double zz = t.at(0, "ztilde_z"), mz = t.at(0, "m_z"), vz = t.at(0, "v_z");
    const bool pass = std::abs(zz) <= kC9Sigmas && std::abs(mz) <= kC9Sigmas && std::abs(vz) <= kC9Sigmas;
    return {pass, "E[Z~_T]=" + fmt(t.at(0, "ztilde_hat")) + "/" + fmt(t.at(0, "ztilde_target")) + " z=" + fmt(zz, 3) +
                      " m_hat=" + fmt(t.at(0, "m_hat")) + "/" + fmt(t.at(0, "m_star")) + " z=" + fmt(mz, 3) +
                      " v_hat=" + fmt(t.at(0, "v_hat")) + "/" + fmt(t.at(0, "v_target")) + " z=" + fmt(vz, 3) +
                      " trades=" + fmt(t.at(0, "mean_trades"), 4)};
}

// ---------------------------------------------------------------------------
// 10. General LQ solver
// ---------------------------------------------------------------------------

constexpr double kC10ScalarTol = 1e-6;
constexpr double kC10SymmetryTol = 1e-10;

Outcome general_lq() {
    const hd::Curve b({0.0, 1.0}, {0.05, 0.15});
    const hd::Curve s({0.0, 0.5, 1.0}, {0.2, 0.3, 0.25});
    const auto model = hd::ModelSpec::black_scholes(100.0, b, s);
    const hd::TimeGrid grid(1.0, 1000);
    double scalar = 0.0;
    for (double mu : {0.5, 1.0, 2.0}) {
        const auto lq = hd::general_lq_solve(hd::black_scholes_lq_problem(model, mu), grid);
        const auto ode = hd::riccati_ode(hd::rho_squared_curve(model, grid), mu, grid);
        for (std::size_t k = 0; k < grid.size(); ++k) scalar = std::max(scalar, std::abs(lq.p[k](0, 0) - ode.p[k]) / ode.p[k]);
    }

    using Eigen::MatrixXd;
    std::mt19937_64 gen(10);
    std::normal_distribution<double> nd;
    auto rand = [&](int r, int c) {
        MatrixXd m(r, c);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) m(i, j) = nd(gen);
        return m;
    };
    double asym = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const MatrixXd a = rand(2, 2), bm = rand(2, 2), d = rand(2, 2), lq = rand(2, 2), lr = rand(2, 2), lh = rand(2, 2);
        hd::LqProblem pb;
        pb.state_dim = pb.control_dim = 2;
        pb.a = [a](double) { return a; };
        pb.b = [bm](double) { return bm; };
        pb.d = {[d](double t) { return MatrixXd(d * (1.0 + 0.5 * t)); }};
        pb.q = [lq](double) { return MatrixXd(lq * lq.transpose()); };
        pb.r = [lr](double) { return MatrixXd(lr * lr.transpose() + MatrixXd::Identity(2, 2)); };
        pb.f = [](double t) { return Eigen::VectorXd::Constant(2, t); };
        pb.h = lh * lh.transpose() + MatrixXd::Identity(2, 2);
        for (const auto& p : hd::general_lq_solve(pb, hd::TimeGrid(1.0, 400)).p) asym = std::max(asym, (p - p.transpose()).norm());
    }
    return {scalar <= kC10ScalarTol && asym < kC10SymmetryTol,
            "scalar max_rel_err=" + fmt(scalar, 3) + " 2x2 max ||P - P'||=" + fmt(asym, 3)};
}

// ---------------------------------------------------------------------------
// 11. Determinism across thread counts
// ---------------------------------------------------------------------------

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const int status = std::system((std::string(HEDGEDISC_CLI) + " " + args + " --quiet").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism() {
    const auto dir = std::filesystem::temp_directory_path() / "hedgedisc_acceptance";
    std::filesystem::create_directories(dir);
    struct Case {
        std::string command, config;
    };
    const std::vector<Case> cases{
        {"simulate", R"({"model": {"drift": 0.1, "vol": 0.2}, "rule": {"variant": "hitting"}, "eps": [0.1],
                         "mc": {"paths": 300, "seed": 11}})"},
        {"convergence", R"({"model": {"drift": 0.1, "vol": 0.2}, "rule": {"variant": "hitting", "lower": 2, "upper": 1},
                            "eps": [0.2, 0.1], "oversample": 64, "mc": {"paths": 2000, "seed": 12}})"},
        {"convergence", R"({"model": {"kind": "general_diffusion", "y0": 100, "drift": 0.05, "vol": 2.0, "elasticity": 0.5},
                            "delta": {"vol": 0.2}, "rule": {"variant": "equidistant"}, "eps": [0.1],
                            "mc": {"paths": 1000, "seed": 13}})"},
        {"sharpe-sweep", R"({"model": {"y0": 1, "drift": 0.1, "vol": 0.2}, "delta": {"strike": 1},
                             "rule": {"variant": "sharpe", "lambdas": [0, 1]}, "eps": [0.05], "oversample": 16,
                             "mc": {"paths": 500, "seed": 14}})"},
        {"frontier", R"({"model": {"y0": 1, "drift": 0.1, "vol": 0.2}, "delta": {"strike": 1},
                         "rule": {"variant": "optimal_ee"}, "frontier": {"m": [0.05, 0.1], "delta": 0.002},
                         "eps": [0.1], "oversample": 16, "mc": {"paths": 500, "seed": 15}})"},
        {"riccati-check", R"({"model": {"drift": {"times": [0, 1], "values": [0.05, 0.15]}, "vol": 0.2},
                              "rule": {"variant": "hitting"}})"},
    };
    std::size_t compared = 0;
    std::string mismatches;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const auto cfg_path = (dir / ("case" + std::to_string(i) + ".json")).string();
        std::ofstream(cfg_path, std::ios::binary) << cases[i].config;
        for (const std::string format : {"csv", "json"}) {
            const auto a = (dir / ("case" + std::to_string(i) + "_t1." + format)).string();
            const auto b = (dir / ("case" + std::to_string(i) + "_t8." + format)).string();
            const std::string base = cases[i].command + " --config " + cfg_path + " --format " + format;
            const int ra = run_cli(base + " --threads 1 --out " + a);
            const int rb = run_cli(base + " --threads 8 --out " + b);
            const auto fa = slurp(a), fb = slurp(b);
            ++compared;
            if (ra != 0 || rb != 0 || fa.empty() || fa != fb) mismatches += " " + cases[i].command + "/" + format;
        }
    }
    return {mismatches.empty(), "runs compared=" + std::to_string(compared) + " (1 vs 8 threads)" +
                                    (mismatches.empty() ? std::string(" all byte-identical") : " mismatched:" + mismatches)};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--only" && i + 1 < argc) {
            std::stringstream ss(argv[++i]);
            std::string item;
            while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
        } else if (arg == "--threads" && i + 1 < argc) {
            g_threads = static_cast<unsigned>(std::stoul(argv[++i]));
        } else {
            std::cerr << "usage: acceptance [--only N[,N...]] [--threads n]\n";
            return 2;
        }
    }

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"limit-moment convergence, symmetric barriers", limit_moment_convergence},
        {"equidistant rule second moment", equidistant_second_moment},
        {"exit-probability identity", exit_probability},
        {"barrier algebra round trip", barrier_round_trip},
        {"Sharpe sweep", sharpe_sweep},
        {"Lambert W", lambert_w},
        {"Riccati closed form vs RK4", riccati_vs_rk4},
        {"frontier mu-invariance", frontier_invariance},
        {"controller moments and optimal rule", controller_moments},
        {"general LQ solver", general_lq},
        {"determinism across thread counts", determinism},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (!o.pass) ++failures;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << criteria[i].first << " | " << o.detail << " | "
                  << fmt(secs, 3) << " s" << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
