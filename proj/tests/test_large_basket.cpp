/*
   Copyright 2026 The lbcdo Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/


#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "lbcdo/driver.hpp"
#include "lbcdo/large_basket.hpp"
#include "lbcdo/parallel.hpp"
#include "lbcdo/single_name.hpp"

namespace {

using namespace lbcdo;

const ModelParams kTable3({0.015, 0.0543, 0.158});

std::vector<double> synthetic_x0(const ModelParams& p) {
    const Schedule sched = build_schedule(p);
    std::vector<double> x0;
    for (int k = 0; k < 125; ++k) {
        const double q = std::exp(std::log(0.04) + (std::log(0.004) - std::log(0.04)) * k / 124.0);
        x0.push_back(invert_x0(q, p.beta(), sched, p.lgd()));
    }
    return x0;
}

class ThreadGuard {
public:
    explicit ThreadGuard(unsigned n) : saved_(threads()) { set_threads(n); }
    ~ThreadGuard() { set_threads(saved_); }

private:
    unsigned saved_;
};

TEST(Driver, IncrementMoments) {
    const CommonFactorDriver d(4000, 4, 0.25, 14, 3);
    const double dt = d.dt();
    double m1 = 0.0, m2 = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < d.paths(); ++p) {
        for (int q = 0; q < 4; ++q) {
            const double* inc = d.increments(p, q);
            for (int s = 0; s < 14; ++s, ++n) {
                m1 += inc[s];
                m2 += inc[s] * inc[s];
            }
        }
    }
    m1 /= n;
    m2 /= n;
    EXPECT_NEAR(m1, 0.0, 5.0 * std::sqrt(dt / n));
    EXPECT_NEAR(m2, dt, 5.0 * dt * std::sqrt(2.0 / n));
}

TEST(Driver, PathsIndependentOfDriverSize) {
    const CommonFactorDriver small(10, 20, 0.25, 14, 7);
    const CommonFactorDriver large(300, 20, 0.25, 14, 7);
    for (std::size_t p = 0; p < 10; ++p) {
        for (int q = 0; q < 20; ++q) EXPECT_EQ(small.quarter_increment(p, q), large.quarter_increment(p, q));
    }
}

TEST(Driver, CoarseIncrementsAndIntegral) {
    const CommonFactorDriver d(2, 1, 0.25, 14, 1);
    const auto coarse = d.coarse_increments(0, 0, 7);
    double sum = 0.0;
    for (double x : coarse) sum += x;
    EXPECT_NEAR(sum, d.quarter_increment(0, 0), 1e-15);
    EXPECT_THROW(d.coarse_increments(0, 0, 5), InvalidParameter);
    // Trapezoid integral on the full grid by hand.
    const double h = d.dt();
    double level = 0.0, integral = 0.0;
    for (int s = 0; s < 14; ++s) {
        integral += h * (level + 0.5 * d.increments(0, 0)[s]);
        level += d.increments(0, 0)[s];
    }
    EXPECT_NEAR(d.quarter_integral(0, 0), integral, 1e-15);
}

TEST(Driver, ExactIntegralVariance) {
    // Var(int_0^h M ds) = h^3 / 3 under the exact joint law.
    const double h = 0.25;
    const CommonFactorDriver d(20000, 1, h, 4, 11, IntegralRule::ExactGaussian);
    double m2 = 0.0;
    for (std::size_t p = 0; p < d.paths(); ++p) m2 += std::pow(d.quarter_integral(p, 0), 2);
    m2 /= static_cast<double>(d.paths());
    const double var = h * h * h / 3.0;
    EXPECT_NEAR(m2, var, 5.0 * var * std::sqrt(2.0 / d.paths()));
}

TEST(Engine, SingleSchemeRunProperties) {
    const auto x0 = synthetic_x0(kTable3);
    const CommonFactorDriver driver(64, 20, 0.25, 14, 1);
    const LargeBasketEngine engine({}, {});
    EngineStats stats;
    const LossSurface s = engine.run(kTable3, x0, driver, Scheme::DeterministicMagnus, &stats);
    EXPECT_EQ(stats.propagator_builds, 1u);
    EXPECT_EQ(s.paths(), 64u);
    EXPECT_EQ(s.dates(), 21u);
    for (Eigen::Index p = 0; p < 64; ++p) {
        for (Eigen::Index n = 1; n < 21; ++n) EXPECT_GE(s.loss()(p, n), s.loss()(p, n - 1));
    }
}

TEST(Engine, RejectsShortDriver) {
    const auto x0 = synthetic_x0(kTable3);
    const CommonFactorDriver driver(4, 10, 0.25, 14, 1);
    EXPECT_THROW(LargeBasketEngine({}, {}).run(kTable3, x0, driver, Scheme::Theta), InvalidParameter);
}

TEST(Engine, ZeroCorrelationPathsIdentical) {
    const ModelParams p({0.015, 0.0543, 0.0});
    const auto x0 = synthetic_x0(p);
    const CommonFactorDriver driver(8, 20, 0.25, 14, 1);
    const LargeBasketEngine engine({}, {});
    for (Scheme s : {Scheme::EulerMaruyama, Scheme::StochasticMagnus, Scheme::Theta, Scheme::DeterministicMagnus}) {
        const LossSurface surface = engine.run(p, x0, driver, s);
        for (Eigen::Index path = 1; path < 8; ++path) {
            EXPECT_EQ(surface.loss().row(path), surface.loss().row(0)) << scheme_name(s);
        }
    }
}

TEST(Engine, BitwiseReproducibleAcrossThreadCounts) {
    const auto x0 = synthetic_x0(kTable3);
    const LargeBasketEngine engine({}, {});
    for (Scheme s : {Scheme::EulerMaruyama, Scheme::StochasticMagnus, Scheme::Theta, Scheme::DeterministicMagnus}) {
        LossSurface one, many;
        {
            ThreadGuard g(1);
            const CommonFactorDriver driver(200, 20, 0.25, 14, 5);
            one = engine.run(kTable3, x0, driver, s);
        }
        {
            ThreadGuard g(4);
            const CommonFactorDriver driver(200, 20, 0.25, 14, 5);
            many = engine.run(kTable3, x0, driver, s);
        }
        EXPECT_EQ(one.survivor(), many.survivor()) << scheme_name(s);
    }
}

TEST(Engine, SchemesAgreeOnIndex) {
    const auto x0 = synthetic_x0(kTable3);
    const CommonFactorDriver driver(500, 20, 0.25, 14, 2);
    const LargeBasketEngine engine({}, {});
    const Schedule sched = build_schedule(kTable3);
    const double dm = index_spread(engine.run(kTable3, x0, driver, Scheme::DeterministicMagnus), sched);
    const double sm = index_spread(engine.run(kTable3, x0, driver, Scheme::StochasticMagnus), sched);
    const double th = index_spread(engine.run(kTable3, x0, driver, Scheme::Theta), sched);
    EXPECT_NEAR(sm / dm, 1.0, 0.01);
    EXPECT_NEAR(th / dm, 1.0, 0.01);
}

TEST(Scheme, NamesRoundTrip) {
    for (Scheme s : {Scheme::EulerMaruyama, Scheme::StochasticMagnus, Scheme::Theta, Scheme::DeterministicMagnus}) {
        EXPECT_EQ(parse_scheme(scheme_name(s)), s);
    }
    EXPECT_FALSE(parse_scheme("mc").has_value());
}

} // namespace
