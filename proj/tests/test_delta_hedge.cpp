#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "hedgedisc/delta_hedge.hpp"

namespace hd = hedgedisc;

namespace {

// Black-Scholes call price with zero rates, written out independently.
double call_price(double t, double y, const hd::DeltaSpec& s) {
    const double sd = s.vol * std::sqrt(s.maturity - t);
    const double d1 = std::log(y / s.strike) / sd + 0.5 * sd;
    auto cdf = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
    return y * cdf(d1) - s.strike * cdf(d1 - sd);
}

hd::PathBundle path_from(std::vector<double> y, double horizon = 1.0) {
    hd::PathBundle p;
    p.grid = hd::TimeGrid(horizon, y.size() - 1);
    p.y = std::move(y);
    return p;
}

}  // namespace

TEST(Normal, DensityAndDistribution) {
    EXPECT_NEAR(hd::norm_pdf(0.0), 0.3989422804014327, 1e-16);
    EXPECT_DOUBLE_EQ(hd::norm_cdf(0.0), 0.5);
    EXPECT_NEAR(hd::norm_cdf(1.959963984540054), 0.975, 1e-15);
    EXPECT_NEAR(hd::norm_cdf(-8.0), 6.22096057427178e-16, 1e-28);
}

TEST(Delta, MatchesFiniteDifferenceOfThePrice) {
    const hd::DeltaSpec s{100.0, 0.2, 1.0};
    for (double y : {70.0, 95.0, 100.0, 108.0, 140.0}) {
        for (double t : {0.0, 0.5, 0.9}) {
            const double h = 1e-3 * y;
            auto diff = [&](double k) { return call_price(t, y + k * h, s) - call_price(t, y - k * h, s); };
            const double fd = (8.0 * diff(1.0) - diff(2.0)) / (12.0 * h);
            EXPECT_NEAR(hd::bs_delta(t, y, s), fd, 1e-7) << y << " " << t;
        }
    }
    // At the money with tau = 1: d1 = sigma/2 = 0.1.
    EXPECT_NEAR(hd::bs_delta(0.0, 100.0, s), 0.5398278372770290, 1e-15);
}

TEST(Delta, VolatilityMatchesFiniteDifference) {
    const hd::DeltaSpec s{100.0, 0.25, 2.0};
    for (double y : {80.0, 100.0, 125.0}) {
        const double t = 0.7, h = 1e-4 * y;
        const double fd = (hd::bs_delta(t, y + h, s) - hd::bs_delta(t, y - h, s)) / (2 * h);
        EXPECT_NEAR(hd::bs_delta_sensitivity(t, y, s), fd, 1e-8);
        EXPECT_NEAR(hd::bs_delta_vol(t, y, s), fd * 0.25 * y, 1e-7);
    }
    // At the money phi(d1)/sqrt(tau) with d1 = sigma sqrt(tau)/2.
    const double tau = 1.3, d1 = 0.5 * 0.25 * std::sqrt(tau);
    EXPECT_NEAR(hd::bs_delta_vol(0.7, 100.0, s), hd::norm_pdf(d1) / std::sqrt(tau), 1e-15);
}

TEST(Delta, TerminalIndicatorWithHalfAtTheMoney) {
    const hd::DeltaSpec s{100.0, 0.2, 1.0};
    EXPECT_EQ(hd::bs_delta(1.0, 100.5, s), 1.0);
    EXPECT_EQ(hd::bs_delta(1.0, 99.5, s), 0.0);
    EXPECT_EQ(hd::bs_delta(1.0, 100.0, s), 0.5);
    EXPECT_EQ(hd::bs_delta_vol(1.0, 100.0, s), 0.0);
    EXPECT_THROW((void)hd::bs_delta(1.1, 100.0, s), std::invalid_argument);
    EXPECT_THROW((void)hd::bs_delta(0.0, 0.0, s), std::invalid_argument);
}

TEST(DeltaPath, UsesTheModelVolatilityForSigmaX) {
    const hd::DeltaSpec s{100.0, 0.2, 1.0};
    const auto model = hd::ModelSpec::black_scholes(100.0, hd::Curve(0.0), hd::Curve(0.3));
    auto p = path_from({100.0, 104.0, 97.0, 101.0});
    hd::delta_path(p, s, model);
    ASSERT_TRUE(p.has_delta());
    for (std::size_t k = 0; k + 1 < p.y.size(); ++k) {
        const double t = p.grid.time(k);
        EXPECT_NEAR(p.x[k], hd::bs_delta(t, p.y[k], s), 4e-15);
        EXPECT_NEAR(p.sigma_x[k], hd::bs_delta_sensitivity(t, p.y[k], s) * 0.3 * p.y[k], 1e-14);
    }
    EXPECT_EQ(p.x.back(), 1.0);
    EXPECT_EQ(p.sigma_x.back(), 0.0);

    auto wrong = path_from({100.0, 101.0, 99.0}, 2.0);
    EXPECT_THROW(hd::delta_path(wrong, s, model), std::invalid_argument);
}

TEST(HedgingError, HandComputedPath) {
    // X held at X_0 until index 2, then at X_2; Z = sum (X^n - X) dY.
    hd::PathBundle p = path_from({10.0, 11.0, 9.0, 12.0, 13.0});
    p.x = {0.5, 0.6, 0.4, 0.7, 1.0};
    const std::vector<std::size_t> idx{0, 2};
    const auto r = hd::hedging_error(p, idx);
    const double z = (0.5 - 0.5) * 1.0 + (0.5 - 0.6) * -2.0 + (0.4 - 0.4) * 3.0 + (0.4 - 0.7) * 1.0;
    EXPECT_DOUBLE_EQ(r.error, z);
    EXPECT_EQ(r.trades, 2u);
    EXPECT_NEAR(r.error, r.discretized - r.benchmark, 1e-14);
    EXPECT_DOUBLE_EQ(r.quadratic_variation, 0.04 + 0.09);
    EXPECT_DOUBLE_EQ(r.benchmark, hd::benchmark_pnl(p));
}

TEST(HedgingError, RebalancingEveryNodeIsExact) {
    hd::PathBundle p = path_from({10.0, 11.0, 9.0, 12.0});
    p.x = {0.5, 0.6, 0.4, 1.0};
    const std::vector<std::size_t> all{0, 1, 2};
    EXPECT_EQ(hd::hedging_error(p, all).error, 0.0);
    // A trade at maturity changes nothing.
    const std::vector<std::size_t> with_last{0, 1, 2, 3};
    EXPECT_EQ(hd::hedging_error(p, with_last).error, 0.0);
}

TEST(HedgingError, ValidatesIndices) {
    hd::PathBundle p = path_from({10.0, 11.0, 9.0});
    p.x = {0.5, 0.6, 1.0};
    EXPECT_THROW(hd::hedging_error(p, std::vector<std::size_t>{1}), std::invalid_argument);
    EXPECT_THROW(hd::hedging_error(p, std::vector<std::size_t>{0, 1, 1}), std::invalid_argument);
    EXPECT_THROW(hd::hedging_error(p, std::vector<std::size_t>{0, 3}), std::invalid_argument);
    hd::PathBundle bare = path_from({10.0, 11.0, 12.0});
    EXPECT_THROW(hd::hedging_error(bare, std::vector<std::size_t>{0}), std::invalid_argument);
}
