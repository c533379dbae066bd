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
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "lbcdo/core_model.hpp"
#include "lbcdo/driver.hpp"
#include "lbcdo/errors.hpp"
#include "lbcdo/large_basket.hpp"
#include "lbcdo/nn_inference.hpp"
#include "lbcdo/optimize.hpp"
#include "lbcdo/pricing.hpp"
#include "lbcdo/single_name.hpp"

namespace lbcdo {

enum class X0Mode { Analytic, Network };

struct CalibrationConfig {
    double r = 0.015;
    double lgd = 0.6;
    double alpha = 0.25;
    double maturity = 5.0;
    double rho_min = 0.0;
    double rho_max = 1.0 - 1e-6;
    SigmaBox sigma_box{};
    double sigma0 = 0.05;
    double rho0 = 0.5;
    Scheme scheme = Scheme::DeterministicMagnus;
    std::size_t paths = 10000;
    std::uint64_t seed = 1;
    GridSettings grid{};
    SchemeSettings settings{};
    PremiumConvention convention = PremiumConvention::AsPrinted;
    X0Mode x0_mode = X0Mode::Analytic;
    /// Required in network mode.
    std::shared_ptr<const NetworkWeights> f_weights;
    InversionBracket bracket{};
    OptimizerOptions optimizer{};

    ModelParams params(double rho, double sigma) const {
        return ModelParams({r, sigma, rho, lgd, alpha, maturity, sigma_box});
    }

    void validate() const {
        if (!(rho_min >= 0.0 && rho_min <= rho_max && rho_max < 1.0)) {
            throw InvalidParameter("calibration: rho bounds must satisfy 0 <= min <= max < 1");
        }
        if (!(sigma_box.lo > 0.0 && sigma_box.lo <= sigma_box.hi)) throw InvalidParameter("calibration: bad sigma box");
        if (!(rho0 >= rho_min && rho0 <= rho_max)) throw InvalidParameter("calibration: rho start outside bounds");
        if (!(sigma0 >= sigma_box.lo && sigma0 <= sigma_box.hi)) {
            throw InvalidParameter("calibration: sigma start outside bounds");
        }
        if (paths == 0) throw InvalidParameter("calibration: need at least one path");
        if (x0_mode == X0Mode::Network && !f_weights) {
            throw InvalidParameter("calibration: network mode needs x0 inference weights");
        }
    }
};

/// Sub-steps per quarter of the frozen common-factor driver.
inline int driver_substeps(const SchemeSettings& s) {
    const int em = s.em_points - 1;
    const int sm = s.sm_points - 1;
    return std::lcm(std::max(em, 1), std::max(sm, 1));
}

/// Initial distances to default, one per CDS quote (descending quotes give
/// nondecreasing x0 in analytic mode).
inline std::vector<double> infer_x0(const MarketQuotes& quotes, double rho, double sigma,
                                    const CalibrationConfig& config) {
    const ModelParams params = config.params(rho, sigma);
    const auto& cds = quotes.cds_quotes();
    if (config.x0_mode == X0Mode::Network) {
        if (!config.f_weights) throw InvalidParameter("infer_x0: network mode needs weights");
        const auto out = forward_f(*config.f_weights, rho, params.beta());
        if (out.x0.size() != cds.size()) {
            throw InvalidParameter("infer_x0: network returns " + std::to_string(out.x0.size()) + " values for " +
                                   std::to_string(cds.size()) + " names");
        }
        for (double x : out.x0) {
            if (!std::isfinite(x)) throw NumericError("infer_x0: network produced a non-finite x0");
        }
        return out.x0;
    }
    const Schedule sched = build_schedule(params);
    std::vector<double> x0(cds.size());
    std::map<double, double> solved;
    for (std::size_t k = 0; k < cds.size(); ++k) {
        auto it = solved.find(cds[k]);
        if (it == solved.end()) {
            try {
                it = solved.emplace(cds[k], invert_x0(cds[k], params.beta(), sched, params.lgd(), config.bracket)).first;
            } catch (const NoSolution& e) {
                std::ostringstream msg;
                msg << "infer_x0: CDS quote #" << k << " (" << to_bps(cds[k]) << " bps) is not attainable for sigma = "
                    << sigma << "; attainable range [" << to_bps(e.attainable_lo) << ", " << to_bps(e.attainable_hi)
                    << "] bps";
                throw NoSolution(msg.str(), e.attainable_lo, e.attainable_hi);
            }
        }
        x0[k] = it->second;
    }
    return x0;
}

/// Prices tranches and index for given (rho, sigma) on a frozen driver.
inline SpreadReport model_spreads(const MarketQuotes& quotes, double rho, double sigma, const CalibrationConfig& config,
                                  const CommonFactorDriver& driver, double* x0_seconds = nullptr) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto x0 = infer_x0(quotes, rho, sigma, config);
    if (x0_seconds != nullptr) *x0_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const ModelParams params = config.params(rho, sigma);
    const LargeBasketEngine engine(config.grid, config.settings);
    const LossSurface surface = engine.run(params, x0, driver, config.scheme);
    const auto tranches = quotes.tranches();
    return price_surface(surface, tranches, build_schedule(params), config.convention);
}

inline CommonFactorDriver make_driver(const CalibrationConfig& config) {
    const int quarters = period_count(config.alpha, config.maturity);
    return CommonFactorDriver(config.paths, quarters, config.alpha, driver_substeps(config.settings), config.seed);
}

/// Market minus model, in bps: one entry per tranche in quote order, then the index.
inline std::vector<double> objective(double rho, double sigma, const MarketQuotes& quotes,
                                     const CalibrationConfig& config, const CommonFactorDriver& driver,
                                     double* x0_seconds = nullptr) {
    if (!(rho >= config.rho_min && rho <= config.rho_max && sigma >= config.sigma_box.lo &&
          sigma <= config.sigma_box.hi)) {
        throw InvalidParameter("objective: parameters outside the calibration box");
    }
    SpreadReport model;
    try {
        model = model_spreads(quotes, rho, sigma, config, driver, x0_seconds);
    } catch (const Error& e) {
        std::ostringstream msg;
        msg << e.what() << " (at rho = " << rho << ", sigma = " << sigma << ")";
        throw NumericError(msg.str());
    }
    std::vector<double> res;
    const auto& tq = quotes.tranche_quotes();
    res.reserve(tq.size() + 1);
    for (std::size_t j = 0; j < tq.size(); ++j) res.push_back(to_bps(tq[j].spread) - model.tranche_bps[j]);
    res.push_back(to_bps(quotes.index_quote()) - model.index_bps);
    return res;
}

struct CalibrationResult {
    double sigma = 0.0;
    double rho = 0.0;
    std::vector<double> market_tranche_bps;
    double market_index_bps = 0.0;
    std::vector<double> tranche_bps;
    double index_bps = 0.0;
    /// 100 |market - fit| / market per tranche, then the index; NaN for zero quotes.
    std::vector<double> errors_pct;
    double objective = 0.0; // sum of squared residuals in bps^2
    int evaluations = 0;
    int iterations = 0;
    bool converged = false;
    std::string optimizer;
    std::string message;
    double driver_seconds = 0.0;
    double calibration_seconds = 0.0;
    /// Time spent in x0 inference, summed over all evaluations.
    double x0_seconds = 0.0;
    double wall_seconds = 0.0;
};

inline double percentage_error(double market, double fit) {
    return market == 0.0 ? std::numeric_limits<double>::quiet_NaN() : 100.0 * std::abs(market - fit) / market;
}

/// Box-constrained least squares over (sigma, rho) from the configured start.
inline CalibrationResult calibrate(const MarketQuotes& quotes, const CalibrationConfig& config) {
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    auto since = [](auto t) { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count(); };
    CalibrationResult out;
    const CommonFactorDriver driver = make_driver(config);
    out.driver_seconds = since(start);

    const auto opt_start = std::chrono::steady_clock::now();
    double x0_seconds = 0.0;
    auto residuals = [&](const std::vector<double>& x) {
        const double sigma = x[0];
        const double rho = x[1];
        return objective(rho, sigma, quotes, config, driver, &x0_seconds);
    };
    const OptimizerResult opt =
        minimize_least_squares(residuals, {config.sigma0, config.rho0}, {config.sigma_box.lo, config.rho_min},
                               {config.sigma_box.hi, config.rho_max}, config.optimizer);
    out.calibration_seconds = since(opt_start);

    out.sigma = opt.x[0];
    out.rho = opt.x[1];
    out.objective = opt.cost;
    out.evaluations = opt.evaluations;
    out.iterations = opt.iterations;
    out.converged = opt.converged;
    out.optimizer = opt.method;
    out.message = opt.message;

    const SpreadReport fit = model_spreads(quotes, out.rho, out.sigma, config, driver, &x0_seconds);
    out.x0_seconds = x0_seconds;
    out.tranche_bps = fit.tranche_bps;
    out.index_bps = fit.index_bps;
    for (const auto& t : quotes.tranche_quotes()) out.market_tranche_bps.push_back(to_bps(t.spread));
    out.market_index_bps = to_bps(quotes.index_quote());
    for (std::size_t j = 0; j < out.tranche_bps.size(); ++j) {
        out.errors_pct.push_back(percentage_error(out.market_tranche_bps[j], out.tranche_bps[j]));
    }
    out.errors_pct.push_back(percentage_error(out.market_index_bps, out.index_bps));
    out.wall_seconds = since(start);
    return out;
}

} // namespace lbcdo
