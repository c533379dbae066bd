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

#include <cmath>
#include <cstdint>
#include <vector>

#include "lbcdo/errors.hpp"
#include "lbcdo/parallel.hpp"
#include "lbcdo/rng.hpp"

namespace lbcdo {

inline constexpr std::uint32_t kTagCommonFactor = 0x434d4e31; // common factor increments
inline constexpr std::uint32_t kTagBridgeArea = 0x41524541;   // sub-step bridge areas

/// How the time integral of the common factor over a quarter is obtained.
enum class IntegralRule {
    Trapezoid,     // trapezoid on the driver's sub-step grid
    ExactGaussian, // trapezoid plus independent Brownian-bridge areas: exact joint law
};

/// Frozen common-factor paths: per path and quarter, `substeps` Brownian
/// increments of length quarter_length / substeps. Path p only depends on
/// (seed, p), so drivers of different sizes share their leading paths.
class CommonFactorDriver {
public:
    CommonFactorDriver() = default;

    CommonFactorDriver(std::size_t paths, int quarters, double quarter_length, int substeps, std::uint64_t seed,
                       IntegralRule rule = IntegralRule::Trapezoid)
        : paths_(paths), quarters_(quarters), substeps_(substeps), quarter_length_(quarter_length), seed_(seed),
          rule_(rule) {
        if (paths == 0) throw InvalidParameter("CommonFactorDriver: need at least one path");
        if (quarters < 1 || substeps < 1 || !(quarter_length > 0.0)) {
            throw InvalidParameter("CommonFactorDriver: quarters, substeps and quarter length must be positive");
        }
        const std::size_t per_path = static_cast<std::size_t>(quarters) * static_cast<std::size_t>(substeps);
        increments_.resize(paths * per_path);
        if (rule_ == IntegralRule::ExactGaussian) areas_.resize(paths * static_cast<std::size_t>(quarters));
        const double sd = std::sqrt(dt());
        const double area_sd = std::sqrt(dt() * dt() * dt() / 12.0);
        constexpr std::size_t chunk = 256;
        parallel_for((paths + chunk - 1) / chunk, [&](std::size_t c) {
            const std::size_t end = std::min(paths, (c + 1) * chunk);
            for (std::size_t p = c * chunk; p < end; ++p) {
                RandomStream rs(seed_, stream_id(kTagCommonFactor, p));
                double* out = &increments_[p * per_path];
                for (std::size_t i = 0; i < per_path; ++i) out[i] = sd * rs.normal();
                if (rule_ == IntegralRule::ExactGaussian) {
                    RandomStream ra(seed_, stream_id(kTagBridgeArea, p));
                    for (int q = 0; q < quarters_; ++q) {
                        double extra = 0.0;
                        for (int s = 0; s < substeps_; ++s) extra += area_sd * ra.normal();
                        areas_[p * static_cast<std::size_t>(quarters_) + static_cast<std::size_t>(q)] = extra;
                    }
                }
            }
        });
    }

    std::size_t paths() const { return paths_; }
    int quarters() const { return quarters_; }
    int substeps() const { return substeps_; }
    double quarter_length() const { return quarter_length_; }
    double dt() const { return quarter_length_ / substeps_; }
    std::uint64_t seed() const { return seed_; }
    IntegralRule rule() const { return rule_; }

    /// Sub-step increments of path p in quarter q.
    const double* increments(std::size_t p, int q) const {
        return &increments_[(p * static_cast<std::size_t>(quarters_) + static_cast<std::size_t>(q)) *
                            static_cast<std::size_t>(substeps_)];
    }

    double quarter_increment(std::size_t p, int q) const {
        const double* inc = increments(p, q);
        double sum = 0.0;
        for (int s = 0; s < substeps_; ++s) sum += inc[s];
        return sum;
    }

    /// Increments aggregated to `steps` equal sub-steps; steps must divide substeps().
    std::vector<double> coarse_increments(std::size_t p, int q, int steps) const {
        check_divides(steps);
        const int group = substeps_ / steps;
        const double* inc = increments(p, q);
        std::vector<double> out(static_cast<std::size_t>(steps), 0.0);
        for (int s = 0; s < substeps_; ++s) out[static_cast<std::size_t>(s / group)] += inc[s];
        return out;
    }

    /// int_0^h (M_{T_q + s} - M_{T_q}) ds by the trapezoid rule on `steps`
    /// sub-steps, plus the exact bridge areas when the rule asks for them.
    double quarter_integral(std::size_t p, int q, int steps) const {
        const std::vector<double> inc = coarse_increments(p, q, steps);
        const double h = quarter_length_ / steps;
        double level = 0.0;
        double integral = 0.0;
        for (double dm : inc) {
            integral += h * (level + 0.5 * dm);
            level += dm;
        }
        if (rule_ == IntegralRule::ExactGaussian) {
            if (steps != substeps_) {
                throw InvalidParameter("CommonFactorDriver: exact integrals need the full sub-step resolution");
            }
            integral += areas_[p * static_cast<std::size_t>(quarters_) + static_cast<std::size_t>(q)];
        }
        return integral;
    }

    double quarter_integral(std::size_t p, int q) const { return quarter_integral(p, q, substeps_); }

private:
    void check_divides(int steps) const {
        if (steps < 1 || substeps_ % steps != 0) {
            throw InvalidParameter("CommonFactorDriver: " + std::to_string(steps) +
                                   " steps do not divide the driver resolution " + std::to_string(substeps_));
        }
    }

    std::size_t paths_ = 0;
    int quarters_ = 0;
    int substeps_ = 0;
    double quarter_length_ = 0.0;
    std::uint64_t seed_ = 0;
    IntegralRule rule_ = IntegralRule::Trapezoid;
    std::vector<double> increments_;
    std::vector<double> areas_;
};

} // namespace lbcdo
