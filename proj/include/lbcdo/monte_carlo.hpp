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


#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lbcdo/core_model.hpp"
#include "lbcdo/errors.hpp"
#include "lbcdo/parallel.hpp"
#include "lbcdo/pricing.hpp"
#include "lbcdo/rng.hpp"

namespace lbcdo {

inline constexpr std::uint32_t kTagBasketCommon = 0x42534b4d;
inline constexpr std::uint32_t kTagBasketName = 0x42534b57;
inline constexpr std::uint32_t kTagCdsCommon = 0x4344534d;
inline constexpr std::uint32_t kTagCdsName = 0x43445357;
inline constexpr std::uint32_t kTagDatasetSample = 0x44534554;

/// Default dates of K names on M paths, stored as the index j of the first
/// monitoring date T_j with X <= 0 (0 for no default before maturity).
class DefaultTimes {
public:
    DefaultTimes(std::size_t names, std::size_t paths, Schedule sched)
        : names_(names), paths_(paths), sched_(std::move(sched)), period_(names * paths, 0) {}

    std::size_t names() const { return names_; }
    std::size_t paths() const { return paths_; }
    const Schedule& schedule() const { return sched_; }

    int period(std::size_t k, std::size_t m) const { return period_[m * names_ + k]; }
    void set_period(std::size_t k, std::size_t m, int j) { period_[m * names_ + k] = static_cast<std::uint16_t>(j); }

    /// Default time of name k on path m; infinity when it survives.
    double tau(std::size_t k, std::size_t m) const {
        const int j = period(k, m);
        return j == 0 ? std::numeric_limits<double>::infinity() : sched_.date(static_cast<std::size_t>(j));
    }

private:
    std::size_t names_;
    std::size_t paths_;
    Schedule sched_;
    std::vector<std::uint16_t> period_;
};

/// Direct simulation of the basket with exact Gaussian increments between
/// monitoring dates; defaults are absorbing.
inline DefaultTimes simulate_basket(const ModelParams& params, std::span<const double> x0, std::size_t n_paths,
                                    const Schedule& monitor, std::uint64_t seed) {
    if (n_paths == 0) throw InvalidParameter("simulate_basket: number of paths must be positive");
    if (x0.empty()) throw InvalidParameter("simulate_basket: empty basket");
    if (monitor.size() == 0 || monitor.size() > 0xffff) throw ScheduleError("simulate_basket: unsupported schedule");
    for (double x : x0) {
        if (!(x > 0.0) || !std::isfinite(x)) throw InvalidParameter("simulate_basket: x0 must be positive and finite");
    }
    const std::size_t names = x0.size();
    const std::size_t dates = monitor.size();
    DefaultTimes out(names, n_paths, monitor);
    const double beta = params.beta();
    const double a_name = std::sqrt(1.0 - params.rho());
    const double a_common = std::sqrt(params.rho());
    std::vector<double> dt(dates);
    for (std::size_t j = 0; j < dates; ++j) dt[j] = monitor.date(j + 1) - monitor.date(j);

    constexpr std::size_t kChunk = 256;
    const std::size_t chunks = (n_paths + kChunk - 1) / kChunk;
    parallel_for(chunks, [&](std::size_t c) {
        std::vector<double> common(dates);
        const std::size_t end = std::min(n_paths, (c + 1) * kChunk);
        for (std::size_t m = c * kChunk; m < end; ++m) {
            RandomStream zm(seed, stream_id(kTagBasketCommon, m));
            for (std::size_t j = 0; j < dates; ++j) common[j] = a_common * std::sqrt(dt[j]) * zm.normal();
            for (std::size_t k = 0; k < names; ++k) {
                RandomStream zw(seed, stream_id(kTagBasketName, m, k));
                double x = x0[k];
                for (std::size_t j = 0; j < dates; ++j) {
                    x += beta * dt[j] + a_name * std::sqrt(dt[j]) * zw.normal() + common[j];
                    if (x <= 0.0) {
                        out.set_period(k, m, static_cast<int>(j + 1));
                        break;
                    }
                }
            }
        }
    });
    return out;
}

/// Surviving fraction 1 - (defaults by T_j) / K per path and date.
inline LossSurface loss_surface_from_defaults(const DefaultTimes& defaults, double lgd) {
    const std::size_t dates = defaults.schedule().size();
    LossSurface::Matrix survivor(static_cast<Eigen::Index>(defaults.paths()), static_cast<Eigen::Index>(dates + 1));
    std::vector<std::size_t> count(dates + 1);
    const double inv_k = 1.0 / static_cast<double>(defaults.names());
    for (std::size_t m = 0; m < defaults.paths(); ++m) {
        std::fill(count.begin(), count.end(), 0);
        for (std::size_t k = 0; k < defaults.names(); ++k) ++count[static_cast<std::size_t>(defaults.period(k, m))];
        std::size_t dead = 0;
        survivor(static_cast<Eigen::Index>(m), 0) = 1.0;
        for (std::size_t j = 1; j <= dates; ++j) {
            dead += count[j];
            survivor(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(j)) =
                1.0 - static_cast<double>(dead) * inv_k;
        }
    }
    return LossSurface::from_survivor(std::move(survivor), lgd);
}

/// Tranche and index spreads (bps) with expectations replaced by path averages.
inline SpreadReport price_cdo_direct(const DefaultTimes& defaults, const ModelParams& params,
                                     std::span<const TrancheSpec> tranches, const Schedule& sched,
                                     PremiumConvention convention = PremiumConvention::AsPrinted) {
    if (defaults.schedule().size() != sched.size()) {
        throw ScheduleError("price_cdo_direct: defaults were simulated on a different schedule");
    }
    return price_surface(loss_surface_from_defaults(defaults, params.lgd()), tranches, sched, convention);
}

struct McCdsConfig {
    std::size_t paths = 100000;
    int steps_per_quarter = 50;
    std::uint64_t seed = 1;
    /// Weight each step by the Brownian-bridge probability of staying above
    /// the barrier, which makes the monitoring continuous.
    bool bridge = true;
};

struct CdsSample {
    double rho = 0.0;
    double beta = 0.0;
    double x0 = 1.0;
};

struct McQuote {
    double quote = 0.0;     // decimal spread
    double std_error = 0.0; // delta-method standard error of the ratio
};

namespace detail {

struct CdsSums {
    double protection = 0.0;
    double premium = 0.0;
    double protection2 = 0.0;
    double premium2 = 0.0;
    double cross = 0.0;
};

inline constexpr double kParked = 1e100;

/// One step of all paths in a chunk; returns how many paths came close
/// enough to the barrier for the bridge weight to matter.
inline int cds_step(double* __restrict x, double* __restrict w, double* __restrict arg, const double* __restrict gw,
                    const double* __restrict gm, std::size_t width, double drift, double cw, double cm,
                    double two_over_h) {
    int near = 0;
    for (std::size_t p = 0; p < width; ++p) {
        const double xa = x[p];
        const double xb = xa + drift + cw * gw[p] + cm * gm[p];
        x[p] = xb;
        const double g = two_over_h * xa * xb;
        arg[p] = g;
        const double wa = w[p];
        // Bitwise ands keep the loop branch-free so that it vectorises.
        const bool alive = (xb > 0.0) & (xa > 0.0) & (wa > 0.0);
        w[p] = alive ? wa : 0.0;
        // Parked far from the barrier once dead.
        x[p] = alive ? xb : kParked;
        near += static_cast<int>(alive & (g < 40.0));
    }
    return near;
}

inline McQuote finish_quote(const CdsSums& s, std::size_t n) {
    const double inv = 1.0 / static_cast<double>(n);
    const double a = s.protection * inv;
    const double b = s.premium * inv;
    if (!(b > 1e-14)) throw DegenerateQuote("mc_cds_quotes: premium leg vanishes");
    const double ratio = a / b;
    double var = s.protection2 * inv - 2.0 * ratio * s.cross * inv + ratio * ratio * s.premium2 * inv;
    var = std::max(0.0, var);
    if (n > 1) var *= static_cast<double>(n) / static_cast<double>(n - 1);
    return {ratio, std::sqrt(var * inv) / b};
}

} // namespace detail

/// Monte Carlo CDS quotes for many (rho, beta, x0) triples on one shared set
/// of Brownian drivers. Each name follows x0 + beta t + sqrt(1 - rho) W + sqrt(rho) M.
inline std::vector<McQuote> mc_cds_quotes(std::span<const CdsSample> samples, const Schedule& sched, double lgd,
                                          const McCdsConfig& config) {
    if (config.paths == 0) throw InvalidParameter("mc_cds_quotes: number of paths must be positive");
    if (config.steps_per_quarter < 1) throw InvalidParameter("mc_cds_quotes: steps per quarter must be >= 1");
    if (!(lgd >= 0.0 && lgd <= 1.0)) throw InvalidParameter("mc_cds_quotes: lgd outside [0, 1]");
    for (const auto& s : samples) {
        if (!(s.rho >= 0.0 && s.rho < 1.0)) throw InvalidParameter("mc_cds_quotes: rho outside [0, 1)");
        if (!(s.x0 > 0.0) || !std::isfinite(s.beta)) throw InvalidParameter("mc_cds_quotes: invalid sample");
    }
    const std::size_t dates = sched.size();
    const auto steps = static_cast<std::size_t>(config.steps_per_quarter);
    const std::size_t total_steps = dates * steps;
    std::vector<double> h(dates);
    for (std::size_t j = 0; j < dates; ++j) h[j] = (sched.date(j + 1) - sched.date(j)) / static_cast<double>(steps);

    constexpr std::size_t kChunk = 1024;
    constexpr std::size_t kSamplesPerTask = 16;
    std::vector<detail::CdsSums> sums(samples.size());
    // Unit normals laid out as [64-path group][step][path in group].
    std::vector<double> zw(total_steps * kChunk), zm(total_steps * kChunk);

    for (std::size_t first = 0; first < config.paths; first += kChunk) {
        const std::size_t width = std::min(kChunk, config.paths - first);
        parallel_for((width + 63) / 64, [&](std::size_t b) {
            const std::size_t p0 = b * 64;
            const std::size_t n = std::min<std::size_t>(64, width - p0);
            std::vector<double> lw(n * total_steps), lm(n * total_steps);
            for (std::size_t p = 0; p < n; ++p) {
                fill_normals(config.seed, stream_id(kTagCdsName, first + p0 + p),
                             std::span<double>(lw.data() + p * total_steps, total_steps));
                fill_normals(config.seed, stream_id(kTagCdsCommon, first + p0 + p),
                             std::span<double>(lm.data() + p * total_steps, total_steps));
            }
            for (std::size_t s = 0; s < total_steps; ++s) {
                for (std::size_t p = 0; p < n; ++p) {
                    zw[p0 * total_steps + s * 64 + p] = lw[p * total_steps + s];
                    zm[p0 * total_steps + s * 64 + p] = lm[p * total_steps + s];
                }
            }
        });

        const std::size_t tasks = (samples.size() + kSamplesPerTask - 1) / kSamplesPerTask;
        parallel_for(tasks, [&](std::size_t task) {
            constexpr std::size_t kLane = 64;
            std::array<double, kLane> x, w, w_prev, prot, prem, arg;
            const std::size_t end = std::min(samples.size(), (task + 1) * kSamplesPerTask);
            // Lane groups outermost so that their drivers stay in cache across samples.
            for (std::size_t p0 = 0; p0 < width; p0 += kLane) {
                const std::size_t n = std::min(kLane, width - p0);
                for (std::size_t i = task * kSamplesPerTask; i < end; ++i) {
                    const CdsSample& smp = samples[i];
                    const double a_name = std::sqrt(1.0 - smp.rho);
                    const double a_common = std::sqrt(smp.rho);
                    x.fill(smp.x0);
                    w.fill(1.0);
                    w_prev.fill(1.0);
                    prot.fill(0.0);
                    prem.fill(0.0);
                    for (std::size_t j = 0; j < dates; ++j) {
                        const double drift = smp.beta * h[j];
                        const double sq = std::sqrt(h[j]);
                        const double cw = a_name * sq;
                        const double cm = a_common * sq;
                        const double two_over_h = 2.0 / h[j];
                        for (std::size_t s = j * steps; s < (j + 1) * steps; ++s) {
                            const std::size_t off = p0 * total_steps + s * kLane;
                            const int near = detail::cds_step(x.data(), w.data(), arg.data(), zw.data() + off,
                                                              zm.data() + off, n, drift, cw, cm, two_over_h);
                            // exp(-40) is below half an ulp of 1, so larger arguments leave w unchanged.
                            if (config.bridge && near > 0) {
                                for (std::size_t p = 0; p < n; ++p) {
                                    if (arg[p] < 40.0 && w[p] > 0.0) w[p] *= -std::expm1(-arg[p]);
                                }
                            }
                        }
                        const double disc = sched.discounts[j];
                        for (std::size_t p = 0; p < n; ++p) {
                            prot[p] += disc * (w_prev[p] - w[p]);
                            prem[p] += disc * w[p];
                            w_prev[p] = w[p];
                        }
                    }
                    detail::CdsSums& acc = sums[i];
                    for (std::size_t p = 0; p < n; ++p) {
                        const double pa = lgd * prot[p];
                        const double pb = sched.alpha * prem[p];
                        acc.protection += pa;
                        acc.premium += pb;
                        acc.protection2 += pa * pa;
                        acc.premium2 += pb * pb;
                        acc.cross += pa * pb;
                    }
                }
            }
        });
    }

    std::vector<McQuote> out;
    out.reserve(samples.size());
    for (const auto& s : sums) out.push_back(detail::finish_quote(s, config.paths));
    return out;
}

struct DatasetConfig {
    std::size_t samples = std::size_t{1} << 17;
    double rho_min = 0.0;
    double rho_max = 1.0 - 1e-6;
    SigmaBox sigma{};
    double x0_max = 6.0;
    double r = 0.015;
    double lgd = 0.6;
    double alpha = 0.25;
    double maturity = 5.0;
    McCdsConfig mc{};
};

inline constexpr const char* kDatasetFormat = "lbcdo-cds-dataset";
inline constexpr int kDatasetVersion = 1;

struct Dataset {
    nlohmann::json header;
    /// Rows of (rho, beta, x0, c_mc).
    std::vector<std::array<double, 4>> rows;
};

namespace detail {

inline void write_le_f64(std::ostream& os, double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
    os.write(reinterpret_cast<const char*>(buf), 8);
}

inline double read_le_f64(const unsigned char* buf) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& data) {
    auto p = data;
    p += ".json";
    return p;
}

} // namespace detail

/// Draws (rho, sigma, x0) uniformly, converts sigma to beta and prices each
/// row by Monte Carlo. The sample draw for row i uses its own stream.
inline Dataset generate_cds_dataset(const DatasetConfig& config) {
    if (config.samples == 0) throw InvalidParameter("generate_cds_dataset: no samples requested");
    if (!(config.rho_min >= 0.0 && config.rho_min <= config.rho_max && config.rho_max < 1.0)) {
        throw InvalidParameter("generate_cds_dataset: rho range must lie in [0, 1)");
    }
    if (!(config.sigma.lo > 0.0 && config.sigma.lo <= config.sigma.hi)) {
        throw InvalidParameter("generate_cds_dataset: invalid sigma range");
    }
    if (!(config.x0_max > 0.0)) throw InvalidParameter("generate_cds_dataset: x0 range must be positive");
    const Schedule sched = build_schedule(config.alpha, config.maturity, config.r);

    std::vector<CdsSample> samples(config.samples);
    for (std::size_t i = 0; i < config.samples; ++i) {
        RandomStream u(config.mc.seed, stream_id(kTagDatasetSample, i));
        const auto a = u.uniform_pair();
        const auto b = u.uniform_pair();
        const double rho = config.rho_min + (config.rho_max - config.rho_min) * a[0];
        const double sigma = config.sigma.lo + (config.sigma.hi - config.sigma.lo) * a[1];
        samples[i] = {rho, derive_beta(config.r, sigma), config.x0_max * b[0]};
    }
    const auto quotes = mc_cds_quotes(samples, sched, config.lgd, config.mc);

    Dataset ds;
    ds.rows.reserve(config.samples);
    for (std::size_t i = 0; i < config.samples; ++i) {
        ds.rows.push_back({samples[i].rho, samples[i].beta, samples[i].x0, quotes[i].quote});
    }
    ds.header = {
        {"format", kDatasetFormat},
        {"version", kDatasetVersion},
        {"columns", {"rho", "beta", "x0", "c_mc"}},
        {"dtype", "float64"},
        {"byte_order", "little"},
        {"rows", config.samples},
        {"ranges",
         {{"rho", {config.rho_min, config.rho_max}},
          {"sigma", {config.sigma.lo, config.sigma.hi}},
          {"beta", {derive_beta(config.r, config.sigma.hi), derive_beta(config.r, config.sigma.lo)}},
          {"x0", {0.0, config.x0_max}}}},
        {"seed", config.mc.seed},
        {"paths", config.mc.paths},
        {"steps_per_quarter", config.mc.steps_per_quarter},
        {"bridge", config.mc.bridge},
        {"r", config.r},
        {"lgd", config.lgd},
        {"alpha", config.alpha},
        {"maturity", config.maturity},
        {"quote_unit", "decimal"},
    };
    return ds;
}

/// Writes the binary rows to `path` and the header to `path` + ".json".
inline void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream bin(path, std::ios::binary | std::ios::trunc);
    if (!bin) throw IoError("cannot open dataset file for writing: " + path.string());
    for (const auto& row : ds.rows) {
        for (double v : row) detail::write_le_f64(bin, v);
    }
    bin.flush();
    if (!bin) throw IoError("failed writing dataset file: " + path.string());
    const auto side = detail::sidecar_path(path);
    std::ofstream js(side, std::ios::trunc);
    if (!js) throw IoError("cannot open dataset sidecar for writing: " + side.string());
    js << ds.header.dump(2) << '\n';
    js.flush();
    if (!js) throw IoError("failed writing dataset sidecar: " + side.string());
}

inline Dataset read_dataset(const std::filesystem::path& path) {
    const auto side = detail::sidecar_path(path);
    std::ifstream js(side);
    if (!js) throw IoError("cannot open dataset sidecar: " + side.string());
    Dataset ds;
    try {
        js >> ds.header;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed dataset sidecar " + side.string() + ": " + e.what());
    }
    if (ds.header.value("format", "") != kDatasetFormat || ds.header.value("version", 0) != kDatasetVersion) {
        throw IoError("unsupported dataset format in " + side.string());
    }
    const auto rows = ds.header.value("rows", std::size_t{0});
    std::ifstream bin(path, std::ios::binary);
    if (!bin) throw IoError("cannot open dataset file: " + path.string());
    std::vector<unsigned char> buf(rows * 32);
    bin.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(bin.gcount()) != buf.size() || bin.peek() != std::char_traits<char>::eof()) {
        throw IoError("dataset file size does not match its sidecar: " + path.string());
    }
    ds.rows.resize(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t c = 0; c < 4; ++c) ds.rows[i][c] = detail::read_le_f64(buf.data() + 32 * i + 8 * c);
    }
    return ds;
}

} // namespace lbcdo
