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
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lbcdo/errors.hpp"

namespace lbcdo {

using ResidualFunction = std::function<std::vector<double>(const std::vector<double>&)>;

enum class OptimizerMethod { LevenbergMarquardt, NelderMead, Auto };

struct OptimizerOptions {
    OptimizerMethod method = OptimizerMethod::Auto;
    int max_evaluations = 200;
    /// Stop when a step improves the cost by less than this fraction.
    double ftol = 1e-10;
    /// Stop when the step in unit-box coordinates is shorter than this.
    double xtol = 1e-9;
    /// Stop when the projected gradient (unit-box coordinates) is this small.
    double gtol = 1e-12;
    /// Forward-difference step in unit-box coordinates.
    double fd_step = 1e-5;
    double initial_lambda = 1e-3;
    /// Initial simplex edge in unit-box coordinates.
    double simplex_size = 0.1;
};

struct OptimizerResult {
    std::vector<double> x;
    std::vector<double> residuals;
    double cost = 0.0; // sum of squared residuals
    int evaluations = 0;
    int iterations = 0;
    bool converged = false;
    std::string method;
    std::string message;
};

namespace detail {

/// Residual function on the unit box [0, 1]^n, counting and caching the best point.
class BoxedProblem {
public:
    BoxedProblem(ResidualFunction fn, std::vector<double> lower, std::vector<double> upper, int budget)
        : fn_(std::move(fn)), lo_(std::move(lower)), hi_(std::move(upper)), budget_(budget) {}

    std::size_t dim() const { return lo_.size(); }

    std::vector<double> to_x(const Eigen::VectorXd& u) const {
        std::vector<double> x(dim());
        for (std::size_t i = 0; i < dim(); ++i) {
            const double ui = std::clamp(u(static_cast<Eigen::Index>(i)), 0.0, 1.0);
            x[i] = lo_[i] + (hi_[i] - lo_[i]) * ui;
        }
        return x;
    }

    Eigen::VectorXd to_u(const std::vector<double>& x) const {
        Eigen::VectorXd u(static_cast<Eigen::Index>(dim()));
        for (std::size_t i = 0; i < dim(); ++i) {
            u(static_cast<Eigen::Index>(i)) = hi_[i] > lo_[i] ? (x[i] - lo_[i]) / (hi_[i] - lo_[i]) : 0.0;
        }
        return u;
    }

    bool exhausted() const { return evaluations_ >= budget_; }
    int evaluations() const { return evaluations_; }

    Eigen::VectorXd residuals(const Eigen::VectorXd& u) {
        ++evaluations_;
        const auto x = to_x(u);
        const auto r = fn_(x);
        Eigen::VectorXd out = Eigen::Map<const Eigen::VectorXd>(r.data(), static_cast<Eigen::Index>(r.size()));
        if (!out.allFinite()) throw NumericError("optimizer: residual function returned a non-finite value");
        const double c = out.squaredNorm();
        if (c < best_cost_) {
            best_cost_ = c;
            best_x_ = x;
            best_r_ = r;
        }
        return out;
    }

    double best_cost() const { return best_cost_; }
    const std::vector<double>& best_x() const { return best_x_; }
    const std::vector<double>& best_residuals() const { return best_r_; }

private:
    ResidualFunction fn_;
    std::vector<double> lo_;
    std::vector<double> hi_;
    int budget_;
    int evaluations_ = 0;
    double best_cost_ = std::numeric_limits<double>::infinity();
    std::vector<double> best_x_;
    std::vector<double> best_r_;
};

struct RunStatus {
    bool converged = false;
    int iterations = 0;
    std::string message;
};

/// Levenberg-Marquardt on the unit box. Coordinates at a bound whose gradient
/// points outward are frozen for the step; trial points are projected.
inline RunStatus run_levenberg_marquardt(BoxedProblem& prob, Eigen::VectorXd u, const OptimizerOptions& opt) {
    const auto n = static_cast<Eigen::Index>(prob.dim());
    Eigen::VectorXd r = prob.residuals(u);
    double cost = r.squaredNorm();
    double lambda = opt.initial_lambda;
    RunStatus st;
    while (!prob.exhausted()) {
        ++st.iterations;
        if (cost == 0.0) {
            st.converged = true;
            st.message = "zero residual";
            return st;
        }
        Eigen::MatrixXd J(r.size(), n);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (prob.exhausted()) {
                st.message = "evaluation budget exhausted";
                return st;
            }
            Eigen::VectorXd v = u;
            const double h = u(i) + opt.fd_step <= 1.0 ? opt.fd_step : -opt.fd_step;
            v(i) += h;
            J.col(i) = (prob.residuals(v) - r) / h;
        }
        const Eigen::VectorXd g = J.transpose() * r;
        std::vector<Eigen::Index> free;
        for (Eigen::Index i = 0; i < n; ++i) {
            const bool at_lo = u(i) <= 0.0 && g(i) > 0.0;
            const bool at_hi = u(i) >= 1.0 && g(i) < 0.0;
            if (!at_lo && !at_hi) free.push_back(i);
        }
        double pg = 0.0;
        for (Eigen::Index i : free) pg = std::max(pg, std::abs(g(i)));
        if (free.empty() || pg <= opt.gtol * std::max(1.0, cost)) {
            st.converged = true;
            st.message = "projected gradient below tolerance";
            return st;
        }
        const auto m = static_cast<Eigen::Index>(free.size());
        Eigen::MatrixXd Jf(J.rows(), m);
        Eigen::VectorXd gf(m);
        for (Eigen::Index k = 0; k < m; ++k) {
            Jf.col(k) = J.col(free[static_cast<std::size_t>(k)]);
            gf(k) = g(free[static_cast<std::size_t>(k)]);
        }
        const Eigen::MatrixXd H = Jf.transpose() * Jf;
        bool improved = false;
        while (!prob.exhausted()) {
            Eigen::MatrixXd A = H;
            for (Eigen::Index k = 0; k < m; ++k) A(k, k) += lambda * std::max(H(k, k), 1e-12);
            const Eigen::VectorXd step = A.ldlt().solve(-gf);
            Eigen::VectorXd trial = u;
            for (Eigen::Index k = 0; k < m; ++k) {
                const Eigen::Index i = free[static_cast<std::size_t>(k)];
                trial(i) = std::clamp(u(i) + step(k), 0.0, 1.0);
            }
            const double move = (trial - u).norm();
            if (move <= opt.xtol) {
                st.converged = true;
                st.message = "step below tolerance";
                return st;
            }
            const Eigen::VectorXd rt = prob.residuals(trial);
            const double ct = rt.squaredNorm();
            if (ct < cost) {
                const double gain = (cost - ct) / cost;
                u = trial;
                r = rt;
                cost = ct;
                lambda = std::max(lambda / 3.0, 1e-12);
                improved = true;
                if (gain <= opt.ftol) {
                    st.converged = true;
                    st.message = "relative cost reduction below tolerance";
                    return st;
                }
                break;
            }
            lambda *= 4.0;
            if (lambda > 1e16) {
                st.message = "damping diverged without improvement";
                return st;
            }
        }
        if (!improved) break;
    }
    st.message = "evaluation budget exhausted";
    return st;
}

/// Nelder-Mead on the unit box with projection onto the box.
inline RunStatus run_nelder_mead(BoxedProblem& prob, const Eigen::VectorXd& start, const OptimizerOptions& opt) {
    const auto n = static_cast<Eigen::Index>(prob.dim());
    auto project = [](Eigen::VectorXd v) { return v.cwiseMax(0.0).cwiseMin(1.0).eval(); };
    auto cost = [&](const Eigen::VectorXd& v) { return prob.residuals(v).squaredNorm(); };
    std::vector<Eigen::VectorXd> pts{project(start)};
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd v = pts[0];
        v(i) += (v(i) + opt.simplex_size <= 1.0) ? opt.simplex_size : -opt.simplex_size;
        pts.push_back(project(v));
    }
    RunStatus st;
    std::vector<double> f;
    for (const auto& p : pts) {
        if (prob.exhausted()) {
            st.message = "evaluation budget exhausted";
            return st;
        }
        f.push_back(cost(p));
    }
    std::vector<std::size_t> idx(pts.size());
    while (!prob.exhausted()) {
        ++st.iterations;
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return f[a] < f[b]; });
        const std::size_t best = idx.front();
        const std::size_t worst = idx.back();
        const std::size_t second = idx[idx.size() - 2];
        double spread = 0.0;
        for (const auto& p : pts) spread = std::max(spread, (p - pts[best]).cwiseAbs().maxCoeff());
        if (spread <= opt.xtol || std::abs(f[worst] - f[best]) <= opt.ftol * std::max(f[best], 1e-300)) {
            st.converged = true;
            st.message = "simplex collapsed";
            return st;
        }
        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (std::size_t i : idx) {
            if (i != worst) centroid += pts[i];
        }
        centroid /= static_cast<double>(n);
        const Eigen::VectorXd xr = project(centroid + (centroid - pts[worst]));
        const double fr = cost(xr);
        if (fr < f[best]) {
            if (prob.exhausted()) break;
            const Eigen::VectorXd xe = project(centroid + 2.0 * (centroid - pts[worst]));
            const double fe = cost(xe);
            if (fe < fr) {
                pts[worst] = xe;
                f[worst] = fe;
            } else {
                pts[worst] = xr;
                f[worst] = fr;
            }
            continue;
        }
        if (fr < f[second]) {
            pts[worst] = xr;
            f[worst] = fr;
            continue;
        }
        if (prob.exhausted()) break;
        const bool outside = fr < f[worst];
        const Eigen::VectorXd xc =
            outside ? project(centroid + 0.5 * (xr - centroid)) : project(centroid + 0.5 * (pts[worst] - centroid));
        const double fc = cost(xc);
        if (fc < (outside ? fr : f[worst])) {
            pts[worst] = xc;
            f[worst] = fc;
            continue;
        }
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (i == best || prob.exhausted()) continue;
            pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
            f[i] = cost(pts[i]);
        }
    }
    st.message = "evaluation budget exhausted";
    return st;
}

} // namespace detail

/// Minimises the sum of squared residuals over the box [lower, upper]. The
/// result carries the best point seen, flagged non-converged on stagnation.
inline OptimizerResult minimize_least_squares(const ResidualFunction& fn, const std::vector<double>& start,
                                              const std::vector<double>& lower, const std::vector<double>& upper,
                                              const OptimizerOptions& opt = {}) {
    if (start.empty() || start.size() != lower.size() || start.size() != upper.size()) {
        throw InvalidParameter("minimize_least_squares: dimension mismatch");
    }
    for (std::size_t i = 0; i < start.size(); ++i) {
        if (!(lower[i] <= upper[i])) throw InvalidParameter("minimize_least_squares: empty box");
        if (!(start[i] >= lower[i] && start[i] <= upper[i])) {
            throw InvalidParameter("minimize_least_squares: start outside the box");
        }
    }
    if (opt.max_evaluations < 1) throw InvalidParameter("minimize_least_squares: evaluation budget must be >= 1");
    detail::BoxedProblem prob(fn, lower, upper, opt.max_evaluations);
    const Eigen::VectorXd u0 = prob.to_u(start);
    OptimizerResult out;
    detail::RunStatus st;
    if (opt.method == OptimizerMethod::NelderMead) {
        st = detail::run_nelder_mead(prob, u0, opt);
        out.method = "nelder-mead";
    } else {
        st = detail::run_levenberg_marquardt(prob, u0, opt);
        out.method = "levenberg-marquardt";
        if (!st.converged && opt.method == OptimizerMethod::Auto && !prob.exhausted()) {
            const int lm_iterations = st.iterations;
            st = detail::run_nelder_mead(prob, prob.to_u(prob.best_x()), opt);
            st.iterations += lm_iterations;
            out.method = "levenberg-marquardt+nelder-mead";
        }
    }
    out.x = prob.best_x();
    out.residuals = prob.best_residuals();
    out.cost = prob.best_cost();
    out.evaluations = prob.evaluations();
    out.iterations = st.iterations;
    out.converged = st.converged;
    out.message = st.message;
    return out;
}

} // namespace lbcdo
