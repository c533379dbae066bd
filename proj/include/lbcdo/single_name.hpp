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
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>

#include <boost/math/tools/toms748_solve.hpp>

#include "lbcdo/core_model.hpp"
#include "lbcdo/errors.hpp"

namespace lbcdo {

/// Standard normal CDF through erfc, which keeps full relative accuracy in
/// the lower tail.
inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * (0.5 * std::numbers::sqrt2)); }

/// One name: X_t = x0 + beta t + B_t with B standard Brownian motion (the
/// mixture of idiosyncratic and common factor is standard in law).
struct SingleNameState {
    double x0 = 1.0;
    double beta = 0.0;
};

/// Q(tau > t) for continuously monitored first passage below zero.
inline double survival_prob(const SingleNameState& s, double t) {
    if (t < 0.0 || !std::isfinite(t)) throw InvalidParameter("survival_prob: t must be >= 0");
    if (s.x0 <= 0.0) return 0.0;
    if (t == 0.0) return 1.0;
    const double sq = std::sqrt(t);
    const double first = norm_cdf((s.x0 + s.beta * t) / sq);
    const double reflected = norm_cdf((-s.x0 + s.beta * t) / sq);
    double value = first;
    if (reflected > 0.0) value -= std::exp(-2.0 * s.beta * s.x0 + std::log(reflected));
    return std::clamp(value, 0.0, 1.0);
}

/// Q(tau <= t), evaluated directly so that small default probabilities keep
/// their relative accuracy.
inline double default_prob(const SingleNameState& s, double t) {
    if (t < 0.0 || !std::isfinite(t)) throw InvalidParameter("default_prob: t must be >= 0");
    if (s.x0 <= 0.0) return 1.0;
    if (t == 0.0) return 0.0;
    const double sq = std::sqrt(t);
    const double direct = norm_cdf((-s.x0 - s.beta * t) / sq);
    const double reflected = norm_cdf((-s.x0 + s.beta * t) / sq);
    double value = direct;
    if (reflected > 0.0) value += std::exp(-2.0 * s.beta * s.x0 + std::log(reflected));
    return std::clamp(value, 0.0, 1.0);
}

/// Protection and premium legs of the CDS par-spread formula, without LGD and
/// alpha: protection = sum D_j (S_{j-1} - S_j), premium = sum D_j S_j.
struct CdsLegs {
    double protection = 0.0;
    double premium = 0.0;
};

inline CdsLegs cds_legs_analytic(const SingleNameState& s, const Schedule& sched) {
    CdsLegs legs;
    double prev = default_prob(s, 0.0);
    for (std::size_t j = 0; j < sched.size(); ++j) {
        const double cur = default_prob(s, sched.dates[j]);
        legs.protection += sched.discounts[j] * (cur - prev);
        legs.premium += sched.discounts[j] * survival_prob(s, sched.dates[j]);
        prev = cur;
    }
    return legs;
}

/// Par CDS spread (decimal) with continuously monitored default.
inline double cds_quote_analytic(const SingleNameState& s, const Schedule& sched, double lgd) {
    if (sched.size() == 0) throw InvalidParameter("cds_quote_analytic: empty schedule");
    const CdsLegs legs = cds_legs_analytic(s, sched);
    const double denom = sched.alpha * legs.premium;
    if (denom < 1e-14) throw DegenerateQuote("cds_quote_analytic: premium leg vanishes (certain default)");
    return std::max(0.0, lgd * legs.protection / denom);
}

struct InversionBracket {
    double lo = 1e-6;
    double hi = 6.0;
    int max_iterations = 200;
};

/// Solves cds_quote_analytic(x0) = target for x0 in the bracket. The quote is
/// strictly decreasing in x0.
inline double invert_x0(double target, double beta, const Schedule& sched, double lgd,
                        const InversionBracket& bracket = {}) {
    auto quote = [&](double x) { return cds_quote_analytic({x, beta}, sched, lgd); };
    const double q_lo = quote(bracket.lo); // largest attainable
    const double q_hi = quote(bracket.hi); // smallest attainable
    if (!(target > 0.0) || !(target <= q_lo) || !(target >= q_hi)) {
        throw NoSolution("invert_x0: quote " + std::to_string(target) + " outside attainable interval [" +
                             std::to_string(q_hi) + ", " + std::to_string(q_lo) + "]",
                         q_hi, q_lo);
    }
    if (target == q_lo) return bracket.lo;
    if (target == q_hi) return bracket.hi;

    // Residual relative to the target so the stopping rule is scale free.
    auto f = [&](double x) { return quote(x) / target - 1.0; };
    std::uintmax_t iterations = static_cast<std::uintmax_t>(bracket.max_iterations);
    boost::math::tools::eps_tolerance<double> tol(50);
    const auto [a, b] = boost::math::tools::toms748_solve(f, bracket.lo, bracket.hi, q_lo / target - 1.0,
                                                          q_hi / target - 1.0, tol, iterations);
    const double fa = std::abs(f(a));
    const double fb = std::abs(f(b));
    return fa <= fb ? a : b;
}

} // namespace lbcdo
