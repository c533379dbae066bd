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

#include <chrono>
#include <cmath>
#include <iostream>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "lbcdo/core_model.hpp"
#include "lbcdo/discretization.hpp"
#include "lbcdo/driver.hpp"
#include "lbcdo/expm.hpp"
#include "lbcdo/parallel.hpp"
#include "lbcdo/pde_solvers.hpp"
#include "lbcdo/pricing.hpp"
#include "lbcdo/spde_solvers.hpp"

namespace lbcdo {

/// The four large-basket schemes.
enum class Scheme { EulerMaruyama, Theta, StochasticMagnus, DeterministicMagnus };

inline std::string_view scheme_name(Scheme s) {
    switch (s) {
    case Scheme::EulerMaruyama: return "em";
    case Scheme::Theta: return "theta";
    case Scheme::StochasticMagnus: return "sm";
    case Scheme::DeterministicMagnus: return "dm";
    }
    return "?";
}

inline std::optional<Scheme> parse_scheme(std::string_view name) {
    if (name == "em") return Scheme::EulerMaruyama;
    if (name == "theta") return Scheme::Theta;
    if (name == "sm") return Scheme::StochasticMagnus;
    if (name == "dm") return Scheme::DeterministicMagnus;
    return std::nullopt;
}

/// Mass excess over one tolerated for the Euler-Maruyama scheme.
inline constexpr double kExplicitMassTolerance = 1e-4;

struct GridSettings {
    double a = -10.0;
    double b = 20.0;
    int d = 201;

    SpaceGrid grid() const { return SpaceGrid(a, b, d); }
};

struct SchemeSettings {
    int em_points = 15;
    int sm_points = 15;
    int theta_points = 5;
    double theta = 0.5;
    bool rannacher = true;
    int rannacher_half_steps = 4;
    int magnus_order = 2;
    ExpmOptions expm{};
    /// Relative size below which propagator entries are skipped; 0 applies it densely.
    double propagator_cutoff = kPropagatorCutoff;
    /// Paths per block; fixed so that results do not depend on the thread count.
    std::size_t block_size = 64;
};

struct EngineStats {
    std::size_t propagator_builds = 0;
    std::size_t far_shifts = 0;
    double seconds = 0.0;
};

/// Evolves the density ensemble for every path of a frozen driver and
/// records the surviving mass at each resettlement date.
class LargeBasketEngine {
public:
    LargeBasketEngine(GridSettings grid, SchemeSettings settings)
        : grid_settings_(grid), grid_(grid.grid()), settings_(settings), spline_(grid_) {}

    const SpaceGrid& grid() const { return grid_; }
    const SchemeSettings& settings() const { return settings_; }

    /// Loss surface for all driver paths. The driver must span params.periods()
    /// quarters of length alpha.
    LossSurface run(const ModelParams& params, std::span<const double> x0, const CommonFactorDriver& driver,
                    Scheme scheme, EngineStats* stats = nullptr) const {
        const auto start = std::chrono::steady_clock::now();
        if (driver.quarters() < params.periods() || std::abs(driver.quarter_length() - params.alpha()) > 1e-12) {
            throw InvalidParameter("LargeBasketEngine: driver does not cover the payment schedule");
        }
        const int quarters = params.periods();
        const OperatorBundle ops = build_operators(grid_, params);
        const DensityVector initial = smooth_initial_datum(x0, grid_);
        const double sqrt_rho = std::sqrt(params.rho());

        std::optional<SpdeQuarterPlan> spde;
        std::optional<ThetaQuarterStepper> theta;
        PropagatorCache cache;
        std::optional<PropagatorApply> propagator;
        switch (scheme) {
        case Scheme::EulerMaruyama:
        case Scheme::StochasticMagnus:
            spde.emplace(ops.A, ops.B, params.alpha(), settings_.em_points, settings_.sm_points,
                         settings_.magnus_order, settings_.expm);
            break;
        case Scheme::Theta:
            theta.emplace(ops.C, params.alpha(), settings_.theta_points, settings_.theta, settings_.rannacher,
                          settings_.rannacher_half_steps);
            break;
        case Scheme::DeterministicMagnus:
            propagator.emplace(cache.get(ops.C, params.alpha()), settings_.propagator_cutoff);
            break;
        }

        const std::size_t paths = driver.paths();
        const std::size_t block = std::max<std::size_t>(1, settings_.block_size);
        const std::size_t n_blocks = (paths + block - 1) / block;
        LossSurface::Matrix survivor(static_cast<Eigen::Index>(paths), quarters + 1);
        std::vector<std::size_t> far(n_blocks, 0);
        const double initial_mass = clipped_mass(initial, grid_);

        parallel_for(n_blocks, [&](std::size_t b) {
            const std::size_t first = b * block;
            const auto width = static_cast<Eigen::Index>(std::min(block, paths - first));
            DensityBlock v = initial.replicate(1, width);
            for (Eigen::Index p = 0; p < width; ++p) survivor(static_cast<Eigen::Index>(first) + p, 0) = initial_mass;
            Eigen::RowVectorXd shifts(width);
            for (int q = 0; q < quarters; ++q) {
                switch (scheme) {
                case Scheme::EulerMaruyama:
                    evolve_quarter_spde(v, SpdeScheme::EulerMaruyama, driver, first, q, *spde);
                    break;
                case Scheme::StochasticMagnus:
                    evolve_quarter_spde(v, SpdeScheme::Magnus, driver, first, q, *spde);
                    break;
                case Scheme::Theta:
                case Scheme::DeterministicMagnus:
                    for (Eigen::Index p = 0; p < width; ++p) {
                        shifts(p) = sqrt_rho * driver.quarter_increment(first + static_cast<std::size_t>(p), q);
                    }
                    far[b] += evolve_quarter_pde(
                        v, scheme == Scheme::Theta ? PdeScheme::Theta : PdeScheme::DeterministicMagnus,
                        theta ? &*theta : nullptr, propagator ? &*propagator : nullptr, spline_, shifts);
                    break;
                }
                truncate_at_barrier(v, grid_);
                const double dx = grid_.dx();
                for (Eigen::Index p = 0; p < width; ++p) {
                    survivor(static_cast<Eigen::Index>(first) + p, q + 1) = dx * v.col(p).sum();
                }
            }
        });

        std::size_t far_total = 0;
        for (std::size_t f : far) far_total += f;
        if (far_total > 0) {
            std::clog << "lbcdo: warning: " << far_total
                      << " shift(s) beyond half the grid width; mass outside [a, b] dropped\n";
        }
        if (stats != nullptr) {
            stats->propagator_builds = cache.builds();
            stats->far_shifts = far_total;
            stats->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        }
        // Explicit central differences are not positivity preserving: the
        // negative lobe they leave behind the barrier can push the truncated
        // mass marginally above one.
        const double tolerance = scheme == Scheme::EulerMaruyama ? kExplicitMassTolerance : 1e-8;
        return LossSurface::from_survivor(std::move(survivor), params.lgd(), tolerance);
    }

private:
    GridSettings grid_settings_;
    SpaceGrid grid_;
    SchemeSettings settings_;
    SplineShifter spline_;
};

} // namespace lbcdo
