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
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "lbcdo/errors.hpp"

namespace lbcdo {

inline constexpr double kBps = 1e4;

inline double to_bps(double decimal) { return decimal * kBps; }
inline double from_bps(double bps) { return bps / kBps; }

/// Drift of the distance to default, (r - sigma^2/2) / sigma.
inline double derive_beta(double r, double sigma) {
    if (!(sigma > 0.0)) {
        throw InvalidParameter("derive_beta: sigma must be positive, got " + std::to_string(sigma));
    }
    return (r - 0.5 * sigma * sigma) / sigma;
}

/// Admissible volatility box.
struct SigmaBox {
    double lo = 0.01;
    double hi = 0.5;

    bool contains(double s) const { return s >= lo && s <= hi; }
};

/// Number of whole periods of length alpha in T; throws if T/alpha is not integral.
inline int period_count(double alpha, double T) {
    if (!(alpha > 0.0) || !(T > 0.0)) {
        throw ScheduleError("schedule: alpha and T must be positive");
    }
    const double ratio = T / alpha;
    const double n = std::round(ratio);
    if (std::abs(ratio - n) > 1e-9 || n < 1.0) {
        throw ScheduleError("schedule: T/alpha = " + std::to_string(ratio) + " is not a positive integer");
    }
    return static_cast<int>(n);
}

/// Market and model parameters of the structural model. Immutable; beta is
/// always derived from (r, sigma).
class ModelParams {
public:
    struct Spec {
        double r = 0.0;
        double sigma = 0.05;
        double rho = 0.0;
        double lgd = 0.6;
        double alpha = 0.25;
        double maturity = 5.0;
        SigmaBox sigma_box{};
    };

    explicit ModelParams(const Spec& s)
        : r_(s.r), sigma_(s.sigma), rho_(s.rho), lgd_(s.lgd), alpha_(s.alpha), maturity_(s.maturity) {
        if (!std::isfinite(r_)) throw InvalidParameter("ModelParams: r must be finite");
        if (!(sigma_ > 0.0) || !s.sigma_box.contains(sigma_)) {
            throw InvalidParameter("ModelParams: sigma = " + std::to_string(sigma_) + " outside [" +
                                   std::to_string(s.sigma_box.lo) + ", " + std::to_string(s.sigma_box.hi) + "]");
        }
        if (!(rho_ >= 0.0 && rho_ < 1.0)) {
            throw InvalidParameter("ModelParams: rho = " + std::to_string(rho_) + " outside [0, 1)");
        }
        if (!(lgd_ > 0.0 && lgd_ <= 1.0)) {
            throw InvalidParameter("ModelParams: lgd = " + std::to_string(lgd_) + " outside (0, 1]");
        }
        if (!(alpha_ > 0.0)) throw InvalidParameter("ModelParams: alpha must be positive");
        try {
            n_periods_ = period_count(alpha_, maturity_);
        } catch (const ScheduleError& e) {
            throw InvalidParameter(std::string("ModelParams: ") + e.what());
        }
        beta_ = derive_beta(r_, sigma_);
    }

    double r() const { return r_; }
    double sigma() const { return sigma_; }
    double rho() const { return rho_; }
    double lgd() const { return lgd_; }
    double alpha() const { return alpha_; }
    double maturity() const { return maturity_; }
    double beta() const { return beta_; }
    int periods() const { return n_periods_; }

    /// Copy with a different (rho, sigma); everything else kept.
    ModelParams with(double rho, double sigma, SigmaBox box = {}) const {
        return ModelParams(Spec{r_, sigma, rho, lgd_, alpha_, maturity_, box});
    }

private:
    double r_;
    double sigma_;
    double rho_;
    double lgd_;
    double alpha_;
    double maturity_;
    double beta_ = 0.0;
    int n_periods_ = 0;
};

struct TrancheSpec {
    double attach = 0.0;
    double detach = 1.0;
    std::string label;

    TrancheSpec() = default;
    TrancheSpec(double a, double d, std::string l = {}) : attach(a), detach(d), label(std::move(l)) {
        if (!(a >= 0.0 && a < 1.0) || !(d > 0.0 && d <= 1.0) || !(a < d)) {
            throw InvalidParameter("TrancheSpec: need 0 <= attach < detach <= 1, got [" + std::to_string(a) +
                                   ", " + std::to_string(d) + "]");
        }
        if (label.empty()) label = default_label(a, d);
    }

    static std::string default_label(double a, double d) {
        auto fmt = [](double x) {
            std::string s = std::to_string(x);
            s.erase(s.find_last_not_of('0') + 1);
            if (!s.empty() && s.back() == '.') s.pop_back();
            return s;
        };
        return "[" + fmt(a) + "," + fmt(d) + "]";
    }
};

struct TrancheQuote {
    TrancheSpec tranche;
    double spread = 0.0; // decimal
};

/// Observed quotes. All spreads are decimals; cds quotes are kept sorted in
/// descending order (stable for ties).
class MarketQuotes {
public:
    MarketQuotes(std::vector<double> cds, std::vector<TrancheQuote> tranches, double index,
                 std::string quote_date = {})
        : cds_(std::move(cds)), tranches_(std::move(tranches)), index_(index), date_(std::move(quote_date)) {
        if (cds_.empty()) throw InvalidParameter("MarketQuotes: need at least one CDS quote");
        for (double q : cds_) {
            if (!(q >= 0.0) || !std::isfinite(q)) throw InvalidParameter("MarketQuotes: CDS quotes must be >= 0");
        }
        for (const auto& t : tranches_) {
            if (!(t.spread >= 0.0)) throw InvalidParameter("MarketQuotes: tranche quotes must be >= 0");
        }
        if (!(index_ >= 0.0)) throw InvalidParameter("MarketQuotes: index quote must be >= 0");
        std::stable_sort(cds_.begin(), cds_.end(), std::greater<>());
    }

    const std::vector<double>& cds_quotes() const { return cds_; }
    const std::vector<TrancheQuote>& tranche_quotes() const { return tranches_; }
    double index_quote() const { return index_; }
    const std::string& quote_date() const { return date_; }
    std::size_t names() const { return cds_.size(); }

    std::vector<TrancheSpec> tranches() const {
        std::vector<TrancheSpec> out;
        out.reserve(tranches_.size());
        for (const auto& t : tranches_) out.push_back(t.tranche);
        return out;
    }

private:
    std::vector<double> cds_;
    std::vector<TrancheQuote> tranches_;
    double index_;
    std::string date_;
};

/// Resettlement dates T_j = alpha * j, j = 1..n, with flat-rate discounts.
struct Schedule {
    double alpha = 0.25;
    double rate = 0.0;
    std::vector<double> dates;
    std::vector<double> discounts;

    std::size_t size() const { return dates.size(); }
    double maturity() const { return dates.empty() ? 0.0 : dates.back(); }
    /// T_j with T_0 = 0.
    double date(std::size_t j) const { return j == 0 ? 0.0 : dates[j - 1]; }
};

inline Schedule build_schedule(double alpha, double T, double r) {
    const int n = period_count(alpha, T);
    Schedule s;
    s.alpha = alpha;
    s.rate = r;
    s.dates.reserve(static_cast<std::size_t>(n));
    s.discounts.reserve(static_cast<std::size_t>(n));
    for (int j = 1; j <= n; ++j) {
        const double t = alpha * j;
        s.dates.push_back(t);
        s.discounts.push_back(std::exp(-r * t));
    }
    return s;
}

inline Schedule build_schedule(const ModelParams& p) { return build_schedule(p.alpha(), p.maturity(), p.r()); }

} // namespace lbcdo
