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
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lbcdo/core_model.hpp"
#include "lbcdo/errors.hpp"

namespace lbcdo {

/// Which outstanding notional enters the premium leg. `AsPrinted` uses
/// Z_{T_{j-1}} for tranches and Z^I_{T_j} for the index.
enum class PremiumConvention { AsPrinted, PeriodStart, PeriodEnd };

/// Per-path surviving mass and loss at T_0..T_N.
class LossSurface {
public:
    using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    LossSurface() = default;

    std::size_t paths() const { return static_cast<std::size_t>(survivor_.rows()); }
    std::size_t dates() const { return static_cast<std::size_t>(survivor_.cols()); }
    double lgd() const { return lgd_; }
    const Matrix& survivor() const { return survivor_; }
    const Matrix& loss() const { return loss_; }

    /// Builds the surface from raw survivor masses (paths x dates). Masses above
    /// 1 + tolerance are an error; the rest is capped at 1 and made
    /// nonincreasing in time so that losses are monotone.
    static LossSurface from_survivor(Matrix survivor, double lgd, double tolerance = 1e-8) {
        if (!(lgd > 0.0 && lgd <= 1.0)) throw InvalidParameter("loss_surface: lgd outside (0, 1]");
        for (Eigen::Index p = 0; p < survivor.rows(); ++p) {
            double running = 1.0;
            for (Eigen::Index n = 0; n < survivor.cols(); ++n) {
                const double m = survivor(p, n);
                if (!std::isfinite(m) || m > 1.0 + tolerance) {
                    throw NumericError("loss_surface: surviving mass " + std::to_string(m) + " on path " +
                                       std::to_string(p) + " at date " + std::to_string(n) + " exceeds 1");
                }
                running = std::min(running, std::max(0.0, m));
                survivor(p, n) = running;
            }
        }
        LossSurface s;
        s.lgd_ = lgd;
        s.loss_ = lgd * (1.0 - survivor.array()).matrix();
        s.survivor_ = std::move(survivor);
        return s;
    }

private:
    Matrix survivor_;
    Matrix loss_;
    double lgd_ = 0.6;
};

inline LossSurface loss_surface(LossSurface::Matrix survivor_history, const ModelParams& params) {
    return LossSurface::from_survivor(std::move(survivor_history), params.lgd());
}

/// Outstanding tranche notional (D - L)^+ - (A - L)^+.
inline double tranche_notional(double loss, const TrancheSpec& t) {
    return std::max(t.detach - loss, 0.0) - std::max(t.attach - loss, 0.0);
}

namespace detail {

/// Path averages of a per-(path, date) quantity, summed in path order.
template <class Fn>
std::vector<double> path_means(const LossSurface& s, Fn&& value) {
    std::vector<double> mean(s.dates(), 0.0);
    for (std::size_t p = 0; p < s.paths(); ++p) {
        for (std::size_t n = 0; n < s.dates(); ++n) mean[n] += value(p, n);
    }
    const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(1, s.paths()));
    for (double& m : mean) m *= inv;
    return mean;
}

inline void check_dates(const LossSurface& s, const Schedule& sched) {
    if (s.dates() != sched.size() + 1) {
        throw InvalidParameter("pricing: loss surface has " + std::to_string(s.dates()) +
                               " dates, schedule needs " + std::to_string(sched.size() + 1));
    }
}

/// sum_j D_j (E Z_{j-1} - E Z_j) / (alpha sum_j D_j E Z_{premium date}).
inline double spread_from_notional(const std::vector<double>& z, const Schedule& sched, bool premium_at_start,
                                   const char* what) {
    double protection = 0.0;
    double premium = 0.0;
    for (std::size_t j = 1; j <= sched.size(); ++j) {
        const double disc = sched.discounts[j - 1];
        protection += disc * (z[j - 1] - z[j]);
        premium += disc * (premium_at_start ? z[j - 1] : z[j]);
    }
    const double denom = sched.alpha * premium;
    if (!(denom > 1e-300)) throw DegenerateQuote(std::string(what) + ": premium leg vanishes");
    return protection / denom;
}

} // namespace detail

/// Single-tranche CDO spread in bps.
inline double tranche_spread(const LossSurface& s, const TrancheSpec& t, const Schedule& sched,
                             PremiumConvention convention = PremiumConvention::AsPrinted) {
    detail::check_dates(s, sched);
    const auto& loss = s.loss();
    const auto z = detail::path_means(s, [&](std::size_t p, std::size_t n) {
        return tranche_notional(loss(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(n)), t);
    });
    const bool at_start = convention != PremiumConvention::PeriodEnd;
    return to_bps(detail::spread_from_notional(z, sched, at_start, "tranche_spread"));
}

/// CDO index spread in bps; Z^I is the surviving fraction.
inline double index_spread(const LossSurface& s, const Schedule& sched,
                           PremiumConvention convention = PremiumConvention::AsPrinted) {
    detail::check_dates(s, sched);
    const auto& surv = s.survivor();
    const auto z = detail::path_means(s, [&](std::size_t p, std::size_t n) {
        return surv(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(n));
    });
    const bool at_start = convention == PremiumConvention::PeriodStart;
    return to_bps(s.lgd() * detail::spread_from_notional(z, sched, at_start, "index_spread"));
}

struct SpreadReport {
    std::vector<double> tranche_bps;
    double index_bps = 0.0;
};

inline SpreadReport price_surface(const LossSurface& s, std::span<const TrancheSpec> tranches, const Schedule& sched,
                                  PremiumConvention convention = PremiumConvention::AsPrinted) {
    SpreadReport r;
    r.tranche_bps.reserve(tranches.size());
    for (const auto& t : tranches) r.tranche_bps.push_back(tranche_spread(s, t, sched, convention));
    r.index_bps = index_spread(s, sched, convention);
    return r;
}

} // namespace lbcdo
