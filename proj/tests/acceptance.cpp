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


// Acceptance suite A1-A7. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Tolerances are fixed below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lbcdo/calibration.hpp"
#include "lbcdo/cli.hpp"
#include "lbcdo/discretization.hpp"
#include "lbcdo/expm.hpp"
#include "lbcdo/large_basket.hpp"
#include "lbcdo/monte_carlo.hpp"
#include "lbcdo/parallel.hpp"
#include "lbcdo/pde_solvers.hpp"
#include "lbcdo/spde_solvers.hpp"

namespace {

using namespace lbcdo;
using Clock = std::chrono::steady_clock;

// A1
constexpr double kA1DmTheta = 0.01;
constexpr double kA1SmEm = 0.025;
constexpr double kA1Index = 0.01;
constexpr double kA1BudgetSeconds = 180.0;
// A2
constexpr int kA2Samples = 20;
constexpr double kA2StdErrors = 3.0;
constexpr double kA2BudgetSeconds = 120.0;
// A3
constexpr int kA3Samples = 100;
constexpr double kA3Tolerance = 1e-8;
constexpr double kA3BudgetSeconds = 5.0;
// A4
constexpr double kA4MinOrder = 1.9;
// A5
constexpr double kA5Mass = 1e-12;
constexpr double kA5Expm = 1e-8;
// A6
constexpr double kA6ParamRel = 0.10;
constexpr double kA6ErrorPct = 2.0;
constexpr double kA6BudgetSeconds = 600.0;
// A7
constexpr int kA7Repeats = 5;

const std::string kData = LBCDO_TEST_DATA;

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

// ---------------------------------------------------------------------------
// A1 / A7 setup

struct A1Setup {
    ModelParams params{{0.015, 0.0543, 0.158, 0.6, 0.25, 5.0}};
    std::vector<double> x0;
    CommonFactorDriver driver;
    LargeBasketEngine engine{{}, {}};
    std::vector<TrancheSpec> tranches = cli::parse_tranches(cli::kDefaultTranches);
};

A1Setup make_a1() {
    cli::RunConfig c;
    c.cds_file = kData + "/cds_synthetic.csv";
    const auto rep = cli::run_invert_x0(c, 30);
    const SchemeSettings s;
    A1Setup setup{.x0 = rep.x0,
                  .driver = CommonFactorDriver(10000, 20, 0.25, driver_substeps(s), 1)};
    return setup;
}

struct Priced {
    SpreadReport spreads;
    double seconds = 0.0;
};

Priced price(const A1Setup& s, Scheme scheme) {
    const auto t0 = Clock::now();
    const LossSurface surface = s.engine.run(s.params, s.x0, s.driver, scheme);
    const double secs = seconds_since(t0);
    return {price_surface(surface, s.tranches, build_schedule(s.params)), secs};
}

std::vector<double> a7_times[4];

Outcome a1(const A1Setup& s) {
    Outcome o;
    const auto t0 = Clock::now();
    const Scheme order[] = {Scheme::DeterministicMagnus, Scheme::Theta, Scheme::StochasticMagnus,
                            Scheme::EulerMaruyama};
    Priced p[4];
    for (int i = 0; i < 4; ++i) {
        p[i] = price(s, order[i]);
        a7_times[i].push_back(p[i].seconds);
    }
    const double runtime = seconds_since(t0);
    const SpreadReport& dm = p[0].spreads;
    double worst[4] = {0, 0, 0, 0};
    for (int i = 1; i < 4; ++i) {
        for (std::size_t j = 0; j < s.tranches.size(); ++j) {
            const double e = rel(p[i].spreads.tranche_bps[j], dm.tranche_bps[j]);
            worst[i] = std::max(worst[i], e);
            const double tol = order[i] == Scheme::Theta ? kA1DmTheta : kA1SmEm;
            o.require(e <= tol, std::string(scheme_name(order[i])) + " tranche " + s.tranches[j].label);
        }
        o.require(rel(p[i].spreads.index_bps, dm.index_bps) <= kA1Index,
                  std::string(scheme_name(order[i])) + " index");
    }
    o.require(runtime < kA1BudgetSeconds, "runtime budget");
    o.detail << "equity dm/theta/sm/em = " << dm.tranche_bps[0] << "/" << p[1].spreads.tranche_bps[0] << "/"
             << p[2].spreads.tranche_bps[0] << "/" << p[3].spreads.tranche_bps[0] << " bps, index dm = " << dm.index_bps
             << ", worst rel theta/sm/em = " << worst[1] << "/" << worst[2] << "/" << worst[3] << ", "
             << runtime << " s";
    for (std::size_t j = 0; j < s.tranches.size(); ++j) {
        o.detail << "\n    " << s.tranches[j].label;
        for (int i = 0; i < 4; ++i) o.detail << " " << p[i].spreads.tranche_bps[j];
    }
    o.detail << "\n    index";
    for (int i = 0; i < 4; ++i) o.detail << " " << p[i].spreads.index_bps;
    return o;
}

Outcome a7(const A1Setup& s) {
    Outcome o;
    const Scheme order[] = {Scheme::DeterministicMagnus, Scheme::Theta, Scheme::EulerMaruyama};
    const int slot[] = {0, 1, 3};
    for (int i = 0; i < 3; ++i) {
        while (static_cast<int>(a7_times[slot[i]].size()) < kA7Repeats) {
            a7_times[slot[i]].push_back(price(s, order[i]).seconds);
        }
    }
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };
    const double dm = median(a7_times[0]);
    const double th = median(a7_times[1]);
    const double em = median(a7_times[3]);
    o.require(dm < th, "dm < theta");
    o.require(th < em, "theta < em");
    o.detail << "median wall time dm = " << dm << " s, theta = " << th << " s, em = " << em << " s";
    return o;
}

// ---------------------------------------------------------------------------

Outcome a2() {
    Outcome o;
    const auto t0 = Clock::now();
    std::mt19937_64 gen(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double r = 0.015;
    const Schedule sched = build_schedule(0.25, 5.0, r);
    std::vector<CdsSample> samples;
    for (int i = 0; i < kA2Samples; ++i) {
        const double rho = (1.0 - 1e-6) * u(gen);
        const double sigma = 0.01 + 0.49 * u(gen);
        const double x0 = 6.0 * u(gen);
        samples.push_back({rho, derive_beta(r, sigma), std::max(x0, 1e-6)});
    }
    McCdsConfig cfg;
    cfg.paths = 100000;
    cfg.steps_per_quarter = 50;
    cfg.seed = 7;
    const auto q = mc_cds_quotes(samples, sched, 0.6, cfg);
    double worst = 0.0;
    for (int i = 0; i < kA2Samples; ++i) {
        const double exact = cds_quote_analytic({samples[i].x0, samples[i].beta}, sched, 0.6);
        const double z = std::abs(q[i].quote - exact) / q[i].std_error;
        worst = std::max(worst, z);
        o.require(std::abs(q[i].quote - exact) <= kA2StdErrors * q[i].std_error, "sample " + std::to_string(i));
    }
    const double runtime = seconds_since(t0);
    o.require(runtime < kA2BudgetSeconds, "runtime budget");
    o.detail << "max |mc - analytic| / se = " << worst << " over " << kA2Samples << " samples, " << runtime << " s";
    return o;
}

Outcome a3() {
    Outcome o;
    const auto t0 = Clock::now();
    std::mt19937_64 gen(99);
    std::uniform_real_distribution<double> ux(0.1, 6.0), us(0.01, 0.5);
    const Schedule sched = build_schedule(0.25, 5.0, 0.015);
    double worst = 0.0;
    for (int i = 0; i < kA3Samples; ++i) {
        const double x0 = ux(gen);
        const double beta = derive_beta(0.015, us(gen));
        const double back = invert_x0(cds_quote_analytic({x0, beta}, sched, 0.6), beta, sched, 0.6);
        worst = std::max(worst, std::abs(back - x0));
    }
    const double runtime = seconds_since(t0);
    o.require(worst <= kA3Tolerance, "round trip");
    o.require(runtime < kA3BudgetSeconds, "runtime budget");
    o.detail << "max |x0 - invert(quote(x0))| = " << worst << ", " << runtime << " s";
    return o;
}

// ---------------------------------------------------------------------------

double fd_error(int d, bool second) {
    const SpaceGrid g(-2.0, 3.0, d);
    DensityVector f(d), exact(d);
    for (int k = 0; k < d; ++k) {
        const double x = g.interior(k);
        const double e = std::exp(-0.1 * x * x);
        f(k) = std::sin(x) * e;
        exact(k) = second ? (-1.2 * std::sin(x) - 0.4 * x * std::cos(x) + 0.04 * x * x * std::sin(x)) * e
                          : (std::cos(x) - 0.2 * x * std::sin(x)) * e;
    }
    const DensityVector approx = (second ? second_difference(g) : first_difference(g)).apply(f);
    return (approx - exact).segment(1, d - 2).cwiseAbs().maxCoeff();
}

Outcome a4(const A1Setup& s) {
    Outcome o;
    // Path-free case: rho = 0, so DM is exp(C/4) per quarter with no shift.
    const ModelParams p({0.015, 0.0543, 0.0});
    const SpaceGrid grid = GridSettings{}.grid();
    const TridiagOperator C = build_operators(grid, p).C;
    const DensityVector v0 = smooth_initial_datum(s.x0, grid);
    const PropagatorMatrix P = build_propagator(C, 0.25);
    DensityVector ref = v0;
    for (int q = 0; q < 20; ++q) ref = truncate_at_barrier(P * ref, grid);

    std::vector<double> errors;
    for (int points : {5, 9, 17, 33}) {
        const ThetaQuarterStepper stepper(C, 0.25, points, 0.5, true);
        DensityVector v = v0;
        for (int q = 0; q < 20; ++q) v = truncate_at_barrier(stepper.evolve(v), grid);
        errors.push_back((v - ref).cwiseAbs().maxCoeff());
    }
    o.detail << "theta errors";
    for (std::size_t i = 0; i < errors.size(); ++i) o.detail << " " << errors[i];
    o.detail << "; orders";
    for (std::size_t i = 1; i < errors.size(); ++i) {
        const double order = std::log2(errors[i - 1] / errors[i]);
        o.detail << " " << order;
        o.require(order >= kA4MinOrder, "theta order at refinement " + std::to_string(i));
    }
    o.detail << "; fd orders";
    for (bool second : {false, true}) {
        double prev = fd_error(49, second);
        for (int d : {99, 199, 399}) {
            const double err = fd_error(d, second);
            const double order = std::log2(prev / err);
            o.detail << " " << order;
            o.require(order >= kA4MinOrder, std::string(second ? "Dxx" : "Dx") + " order at d = " + std::to_string(d));
            prev = err;
        }
    }
    return o;
}

// ---------------------------------------------------------------------------

Outcome a5(const A1Setup& s) {
    Outcome o;
    const Schedule sched = build_schedule(s.params);
    const CommonFactorDriver driver(600, 20, 0.25, 14, 11);

    // Loss paths nondecreasing, tranche tiling of [0, 1] adds up to 1 - L.
    const LossSurface surface = s.engine.run(s.params, s.x0, driver, Scheme::DeterministicMagnus);
    bool monotone = true;
    double tiling = 0.0;
    for (Eigen::Index m = 0; m < surface.loss().rows(); ++m) {
        for (Eigen::Index n = 0; n < surface.loss().cols(); ++n) {
            const double loss = surface.loss()(m, n);
            if (n > 0 && loss < surface.loss()(m, n - 1)) monotone = false;
            double sum = 0.0;
            for (const auto& t : s.tranches) sum += tranche_notional(loss, t);
            tiling = std::max(tiling, std::abs(sum - (1.0 - loss)));
        }
    }
    o.require(monotone, "loss monotone");
    o.require(tiling <= 1e-14, "tiling identity");

    // Smoothed initial datum keeps unit mass.
    const SpaceGrid grid = GridSettings{}.grid();
    const double mass_error = std::abs(mass(smooth_initial_datum(s.x0, grid), grid) - 1.0);
    o.require(mass_error <= kA5Mass, "initial mass");

    // [A, B] is supported in the 2x2 corner blocks.
    const auto ops = build_operators(grid, s.params);
    const DenseMatrix comm = commutator(BandedMatrix(ops.A), BandedMatrix(ops.B)).dense();
    const int d = grid.d();
    const double scale = ops.A.dense().cwiseAbs().maxCoeff() * ops.B.dense().cwiseAbs().maxCoeff();
    double off_corner = 0.0;
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            const bool corner = (i < 2 && j < 2) || (i >= d - 2 && j >= d - 2);
            if (!corner) off_corner = std::max(off_corner, std::abs(comm(i, j)));
        }
    }
    o.require(off_corner <= 1e-14 * scale, "commutator support");
    o.require(comm.topLeftCorner(2, 2).cwiseAbs().maxCoeff() > 0.0, "commutator corners nonzero");

    // Exponential action against the dense exponential at d = 16.
    const SpaceGrid small(-1.0, 2.0, 16);
    const auto small_ops = build_operators(small, s.params);
    const BandedMatrix y = axpby(0.25, BandedMatrix(small_ops.B), 0.3, BandedMatrix(small_ops.A));
    DensityVector v(16);
    for (int k = 0; k < 16; ++k) v(k) = std::exp(-0.5 * small.interior(k) * small.interior(k));
    const DensityVector exact = y.dense().exp() * v;
    const double expm_error = (expm_action(y, v) - exact).cwiseAbs().maxCoeff() / exact.cwiseAbs().maxCoeff();
    o.require(expm_error <= kA5Expm, "exponential action");

    // Same seed, different thread counts, same bits.
    bool bitwise = true;
    const unsigned saved = threads();
    for (Scheme scheme : {Scheme::DeterministicMagnus, Scheme::Theta, Scheme::StochasticMagnus, Scheme::EulerMaruyama}) {
        set_threads(1);
        const LossSurface one = s.engine.run(s.params, s.x0, driver, scheme);
        set_threads(4);
        const LossSurface four = s.engine.run(s.params, s.x0, driver, scheme);
        bitwise = bitwise && one.survivor() == four.survivor();
    }
    set_threads(1);
    const DefaultTimes mc1 = simulate_basket(s.params, s.x0, 400, sched, 5);
    set_threads(4);
    const DefaultTimes mc4 = simulate_basket(s.params, s.x0, 400, sched, 5);
    set_threads(saved);
    for (std::size_t m = 0; m < 400; ++m) {
        for (std::size_t k = 0; k < s.x0.size(); ++k) bitwise = bitwise && mc1.period(k, m) == mc4.period(k, m);
    }
    o.require(bitwise, "bitwise reproducibility");

    o.detail << "tiling " << tiling << ", mass " << mass_error << ", commutator off-corner " << off_corner
             << ", expm rel " << expm_error << ", bitwise " << (bitwise ? "yes" : "no");
    return o;
}

// ---------------------------------------------------------------------------

Outcome a6() {
    Outcome o;
    const auto t0 = Clock::now();
    CalibrationConfig cfg;
    cfg.r = 0.026;
    cfg.paths = 10000;
    cfg.seed = 1;
    const double sigma_star = 0.0294;
    const double rho_star = 0.2409;

    std::vector<double> cds;
    for (const auto& q : cli::read_cds_quotes(kData + "/cds_synthetic.csv")) cds.push_back(from_bps(q.spread_bps));
    const std::vector<TrancheSpec> tranches{TrancheSpec(0.0, 0.03), TrancheSpec(0.03, 0.06), TrancheSpec(0.06, 0.12)};
    std::vector<TrancheQuote> probe;
    for (const auto& t : tranches) probe.push_back({t, 0.0});
    const CommonFactorDriver driver = make_driver(cfg);
    const SpreadReport truth = model_spreads(MarketQuotes(cds, probe, 0.0), rho_star, sigma_star, cfg, driver);
    std::vector<TrancheQuote> quotes;
    for (std::size_t j = 0; j < tranches.size(); ++j) quotes.push_back({tranches[j], from_bps(truth.tranche_bps[j])});
    const MarketQuotes market(cds, quotes, from_bps(truth.index_bps));

    const CalibrationResult res = calibrate(market, cfg);
    const double runtime = seconds_since(t0);
    o.require(rel(res.sigma, sigma_star) <= kA6ParamRel, "sigma recovery");
    o.require(rel(res.rho, rho_star) <= kA6ParamRel, "rho recovery");
    double worst = 0.0;
    for (double e : res.errors_pct) {
        worst = std::max(worst, e);
        o.require(e < kA6ErrorPct, "instrument error");
    }
    o.require(runtime < kA6BudgetSeconds, "runtime budget");
    o.detail << "sigma = " << res.sigma << ", rho = " << res.rho << ", worst error " << worst << " %, "
             << res.evaluations << " evaluations (" << res.optimizer << (res.converged ? ", converged" : "")
             << "), " << runtime << " s";
    return o;
}

} // namespace

int main() {
    int failures = 0;
    auto report = [&](const char* id, Outcome o) {
        std::printf("%s %s %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.str().c_str());
        std::fflush(stdout);
        if (!o.pass) ++failures;
    };
    std::printf("threads: %u\n", threads());
    const A1Setup setup = make_a1();
    report("A1", a1(setup));
    report("A2", a2());
    report("A3", a3());
    report("A4", a4(setup));
    report("A5", a5(setup));
    report("A6", a6());
    report("A7", a7(setup));
    return failures == 0 ? 0 : 1;
}
