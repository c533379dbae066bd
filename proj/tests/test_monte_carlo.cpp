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


#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include <gtest/gtest.h>

#include "lbcdo/monte_carlo.hpp"
#include "lbcdo/single_name.hpp"

namespace {

using namespace lbcdo;

const ModelParams kTable3({0.015, 0.0543, 0.158});

double default_correlation(const DefaultTimes& d, std::size_t a, std::size_t b) {
    double pa = 0, pb = 0, pab = 0;
    for (std::size_t m = 0; m < d.paths(); ++m) {
        const bool da = d.period(a, m) != 0;
        const bool db = d.period(b, m) != 0;
        pa += da;
        pb += db;
        pab += da && db;
    }
    const double n = static_cast<double>(d.paths());
    pa /= n;
    pb /= n;
    pab /= n;
    return (pab - pa * pb) / std::sqrt(pa * (1 - pa) * pb * (1 - pb));
}

std::filesystem::path temp_file(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "lbcdo_test_mc";
    std::filesystem::create_directories(dir);
    return dir / name;
}

TEST(SimulateBasket, UnreachableBarrierNoDefaults) {
    const std::vector<double> x0(10, 1e6);
    const Schedule sched = build_schedule(kTable3);
    const DefaultTimes d = simulate_basket(kTable3, x0, 200, sched, 1);
    const LossSurface s = loss_surface_from_defaults(d, 0.6);
    EXPECT_TRUE((s.survivor().array() == 1.0).all());
    const std::array<TrancheSpec, 2> tr{TrancheSpec(0.0, 0.03), TrancheSpec(0.22, 1.0)};
    const SpreadReport rep = price_cdo_direct(d, kTable3, tr, sched);
    EXPECT_EQ(rep.tranche_bps[0], 0.0);
    EXPECT_EQ(rep.tranche_bps[1], 0.0);
    EXPECT_EQ(rep.index_bps, 0.0);
    EXPECT_TRUE(std::isinf(d.tau(3, 17)));
}

TEST(SimulateBasket, RejectsBadInput) {
    const Schedule sched = build_schedule(kTable3);
    const std::vector<double> x0{1.0};
    EXPECT_THROW(simulate_basket(kTable3, x0, 0, sched, 1), InvalidParameter);
    EXPECT_THROW(simulate_basket(kTable3, std::vector<double>{}, 10, sched, 1), InvalidParameter);
    EXPECT_THROW(simulate_basket(kTable3, std::vector<double>{-1.0}, 10, sched, 1), InvalidParameter);
}

TEST(SimulateBasket, HighCorrelationDefaultsCluster) {
    const ModelParams p({0.015, 0.2, 0.999});
    const std::vector<double> x0{0.8, 0.8};
    const DefaultTimes d = simulate_basket(p, x0, 100000, build_schedule(p), 3);
    EXPECT_GT(default_correlation(d, 0, 1), 0.9);
}

TEST(SimulateBasket, ZeroCorrelationDefaultsIndependent) {
    const ModelParams p({0.015, 0.2, 0.0});
    const std::vector<double> x0{0.8, 0.8};
    const DefaultTimes d = simulate_basket(p, x0, 100000, build_schedule(p), 3);
    EXPECT_NEAR(default_correlation(d, 0, 1), 0.0, 5.0 / std::sqrt(100000.0));
}

TEST(SimulateBasket, DefaultFrequencyMatchesDiscreteMonitoringBound) {
    // Quarterly monitoring sees fewer defaults than continuous monitoring, and
    // at least as many as the terminal-only check.
    const ModelParams p({0.015, 0.2, 0.3});
    const double x0 = 1.0;
    const Schedule sched = build_schedule(p);
    const DefaultTimes d = simulate_basket(p, std::vector<double>{x0}, 100000, sched, 9);
    double freq = 0.0;
    for (std::size_t m = 0; m < d.paths(); ++m) freq += d.period(0, m) != 0;
    freq /= static_cast<double>(d.paths());
    const double se = std::sqrt(freq * (1 - freq) / d.paths());
    const double continuous = 1.0 - survival_prob(SingleNameState{x0, p.beta()}, 5.0);
    const double terminal = norm_cdf(-(x0 + p.beta() * 5.0) / std::sqrt(5.0));
    EXPECT_LT(freq, continuous + 3 * se);
    EXPECT_GT(freq, terminal - 3 * se);
    for (std::size_t m = 0; m < d.paths(); ++m) {
        const double t = d.tau(0, m);
        if (std::isfinite(t)) {
            const double q = t / 0.25;
            EXPECT_NEAR(q, std::round(q), 1e-12);
        }
    }
}

TEST(SimulateBasket, ExchangeableNames) {
    const std::vector<double> x0(4, 1.0);
    const DefaultTimes d = simulate_basket(kTable3, x0, 50000, build_schedule(kTable3), 5);
    std::array<double, 4> freq{};
    for (std::size_t m = 0; m < d.paths(); ++m) {
        for (std::size_t k = 0; k < 4; ++k) freq[k] += d.period(k, m) != 0;
    }
    for (double& f : freq) f /= 50000.0;
    const double se = std::sqrt(freq[0] * (1 - freq[0]) / 50000.0);
    for (std::size_t k = 1; k < 4; ++k) EXPECT_NEAR(freq[k], freq[0], 5 * std::sqrt(2.0) * se);
}

TEST(SimulateBasket, Reproducible) {
    const std::vector<double> x0{0.5, 1.0, 1.5};
    const Schedule sched = build_schedule(kTable3);
    const DefaultTimes a = simulate_basket(kTable3, x0, 1000, sched, 42);
    const DefaultTimes b = simulate_basket(kTable3, x0, 1000, sched, 42);
    const DefaultTimes c = simulate_basket(kTable3, x0, 500, sched, 42);
    for (std::size_t m = 0; m < 500; ++m) {
        for (std::size_t k = 0; k < 3; ++k) {
            EXPECT_EQ(a.period(k, m), b.period(k, m));
            EXPECT_EQ(a.period(k, m), c.period(k, m));
        }
    }
}

TEST(PriceDirect, TotalLossAfterFirstDate) {
    const ModelParams p({0.015, 0.0543, 0.158, 0.6});
    const Schedule sched = build_schedule(p);
    DefaultTimes d(5, 3, sched);
    for (std::size_t m = 0; m < 3; ++m) {
        for (std::size_t k = 0; k < 5; ++k) d.set_period(k, m, 1);
    }
    const std::array<TrancheSpec, 2> tr{TrancheSpec(0.0, 0.03), TrancheSpec(0.0, 0.6)};
    const LossSurface s = loss_surface_from_defaults(d, p.lgd());
    EXPECT_NEAR(tranche_spread(s, tr[0], sched), 40000.0, 1e-8);
    EXPECT_NEAR(tranche_spread(s, tr[1], sched), 40000.0, 1e-8);
    // The index premium leg is paid on the end-of-period notional, which is 0.
    EXPECT_THROW(price_cdo_direct(d, p, tr, sched), DegenerateQuote);
}

TEST(PriceDirect, LossMonotoneAndScheduleChecked) {
    const auto x0 = std::vector<double>(20, 1.0);
    const Schedule sched = build_schedule(kTable3);
    const DefaultTimes d = simulate_basket(kTable3, x0, 300, sched, 2);
    const LossSurface s = loss_surface_from_defaults(d, 0.6);
    for (Eigen::Index m = 0; m < s.loss().rows(); ++m) {
        for (Eigen::Index n = 1; n < s.loss().cols(); ++n) EXPECT_GE(s.loss()(m, n), s.loss()(m, n - 1));
    }
    const std::array<TrancheSpec, 1> tr{TrancheSpec(0.0, 0.03)};
    EXPECT_THROW(price_cdo_direct(d, kTable3, tr, build_schedule(0.25, 3.0, 0.015)), ScheduleError);
}

TEST(McCds, AgreesWithAnalyticWithinThreeStandardErrors) {
    const Schedule sched = build_schedule(kTable3);
    const std::vector<CdsSample> samples{{0.3, 0.2491, 1.5}, {0.0, 0.5, 0.7}, {0.9, -0.1, 2.5}, {0.5, 0.87, 0.3}};
    McCdsConfig cfg;
    cfg.paths = 20000;
    const auto q = mc_cds_quotes(samples, sched, 0.6, cfg);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double exact =
            cds_quote_analytic(SingleNameState{samples[i].x0, samples[i].beta}, sched, 0.6);
        EXPECT_GT(q[i].std_error, 0.0);
        EXPECT_NEAR(q[i].quote, exact, 3.0 * q[i].std_error) << i;
    }
}

TEST(McCds, FarNameQuoteNearZero) {
    const Schedule sched = build_schedule(kTable3);
    const double beta_max = derive_beta(0.015, 0.01);
    const std::vector<CdsSample> samples{{0.5, beta_max, 5.9}};
    McCdsConfig cfg;
    cfg.paths = 20000;
    const auto q = mc_cds_quotes(samples, sched, 0.6, cfg);
    EXPECT_LT(to_bps(q[0].quote), 10.0);
    EXPECT_LT(to_bps(cds_quote_analytic(SingleNameState{5.9, beta_max}, sched, 0.6)), 10.0);
}

TEST(McCds, RejectsBadConfig) {
    const Schedule sched = build_schedule(kTable3);
    const std::vector<CdsSample> s{{0.5, 0.2, 1.0}};
    McCdsConfig cfg;
    cfg.paths = 0;
    EXPECT_THROW(mc_cds_quotes(s, sched, 0.6, cfg), InvalidParameter);
    cfg.paths = 10;
    const std::vector<CdsSample> bad{{1.0, 0.2, 1.0}};
    EXPECT_THROW(mc_cds_quotes(bad, sched, 0.6, cfg), InvalidParameter);
}

TEST(Dataset, RoundTripAndHeader) {
    DatasetConfig cfg;
    cfg.samples = 16;
    cfg.mc.paths = 512;
    cfg.mc.steps_per_quarter = 5;
    const Dataset ds = generate_cds_dataset(cfg);
    ASSERT_EQ(ds.rows.size(), 16u);
    for (const auto& row : ds.rows) {
        EXPECT_GE(row[0], cfg.rho_min);
        EXPECT_LT(row[0], cfg.rho_max);
        EXPECT_GE(row[1], derive_beta(cfg.r, cfg.sigma.hi));
        EXPECT_LE(row[1], derive_beta(cfg.r, cfg.sigma.lo));
        EXPECT_GT(row[2], 0.0);
        EXPECT_LT(row[2], cfg.x0_max);
        EXPECT_GE(row[3], 0.0);
    }
    const auto path = temp_file("ds.bin");
    write_dataset(ds, path);
    EXPECT_EQ(std::filesystem::file_size(path), 16u * 32u);
    const Dataset back = read_dataset(path);
    EXPECT_EQ(back.header, ds.header);
    ASSERT_EQ(back.rows.size(), ds.rows.size());
    for (std::size_t i = 0; i < ds.rows.size(); ++i) EXPECT_EQ(back.rows[i], ds.rows[i]);
    EXPECT_EQ(back.header["columns"][3], "c_mc");
    EXPECT_EQ(back.header["byte_order"], "little");
}

TEST(Dataset, LittleEndianLayout) {
    std::ostringstream os;
    detail::write_le_f64(os, 1.0);
    const std::string bytes = os.str();
    const unsigned char expect[8] = {0, 0, 0, 0, 0, 0, 0xf0, 0x3f};
    ASSERT_EQ(bytes.size(), 8u);
    for (int i = 0; i < 8; ++i) EXPECT_EQ(static_cast<unsigned char>(bytes[i]), expect[i]);
}

TEST(Dataset, Deterministic) {
    DatasetConfig cfg;
    cfg.samples = 8;
    cfg.mc.paths = 256;
    cfg.mc.steps_per_quarter = 2;
    const Dataset a = generate_cds_dataset(cfg);
    const Dataset b = generate_cds_dataset(cfg);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(a.rows[i], b.rows[i]);
}

TEST(Dataset, ReadErrors) {
    EXPECT_THROW(read_dataset(temp_file("missing.bin")), IoError);
    DatasetConfig cfg;
    cfg.samples = 4;
    cfg.mc.paths = 64;
    cfg.mc.steps_per_quarter = 1;
    const auto path = temp_file("trunc.bin");
    write_dataset(generate_cds_dataset(cfg), path);
    std::filesystem::resize_file(path, 4 * 32 - 1);
    EXPECT_THROW(read_dataset(path), IoError);
    std::ofstream(detail::sidecar_path(path)) << "{\"format\": \"other\"}";
    EXPECT_THROW(read_dataset(path), IoError);
    std::ofstream(detail::sidecar_path(path)) << "{ not json";
    EXPECT_THROW(read_dataset(path), IoError);
}

TEST(Dataset, UnwritablePath) {
    DatasetConfig cfg;
    cfg.samples = 1;
    cfg.mc.paths = 16;
    cfg.mc.steps_per_quarter = 1;
    EXPECT_THROW(write_dataset(generate_cds_dataset(cfg), "/nonexistent_dir/x/ds.bin"), IoError);
}

TEST(Dataset, RejectsBadRanges) {
    DatasetConfig cfg;
    cfg.rho_max = 1.0;
    EXPECT_THROW(generate_cds_dataset(cfg), InvalidParameter);
    cfg = {};
    cfg.samples = 0;
    EXPECT_THROW(generate_cds_dataset(cfg), InvalidParameter);
}

} // namespace
