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
#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "lbcdo/discretization.hpp"
#include "lbcdo/errors.hpp"

namespace lbcdo {

/// Dense exp(C delta).
using PropagatorMatrix = DenseMatrix;

/// exp(C delta) by scaling and squaring with Pade approximants.
inline PropagatorMatrix build_propagator(const TridiagOperator& C, double delta) {
    if (!(delta > 0.0)) throw InvalidParameter("build_propagator: delta must be positive");
    const DenseMatrix scaled = C.dense() * delta;
    PropagatorMatrix p = scaled.exp();
    if (!p.allFinite()) {
        throw NumericError("build_propagator: exponential overflowed (||C delta||_1 = " +
                           std::to_string(scaled.cwiseAbs().colwise().sum().maxCoeff()) + ")");
    }
    return p;
}

/// Propagators keyed by (C, delta); counts how many were actually built.
class PropagatorCache {
public:
    const PropagatorMatrix& get(const TridiagOperator& C, double delta) {
        const Key key{C.d, C.sub, C.diag, C.sup, delta};
        std::lock_guard lock(mutex_);
        auto it = cache_.find(key);
        if (it == cache_.end()) {
            it = cache_.emplace(key, build_propagator(C, delta)).first;
            ++builds_;
        }
        return it->second;
    }

    std::size_t builds() const { return builds_; }

private:
    using Key = std::tuple<int, double, double, double, double>;
    std::map<Key, PropagatorMatrix> cache_;
    std::size_t builds_ = 0;
    std::mutex mutex_;
};

/// Entries of exp(C delta) below this fraction of the largest entry are
/// skipped when applying the propagator.
inline constexpr double kPropagatorCutoff = 1e-20;

/// Applies a dense propagator row by row over the column range that holds
/// entries above a relative cutoff. Leading zero rows of the input are
/// skipped exactly.
class PropagatorApply {
public:
    PropagatorApply() = default;

    explicit PropagatorApply(const PropagatorMatrix& p, double cutoff = kPropagatorCutoff) : p_(&p) {
        if (p.rows() != p.cols()) throw InvalidParameter("PropagatorApply: propagator must be square");
        if (!(cutoff >= 0.0)) throw InvalidParameter("PropagatorApply: cutoff must be non-negative");
        const Eigen::Index d = p.rows();
        const double limit = cutoff * p.cwiseAbs().maxCoeff();
        first_.assign(static_cast<std::size_t>(d), 0);
        last_.assign(static_cast<std::size_t>(d), -1);
        for (Eigen::Index i = 0; i < d; ++i) {
            Eigen::Index lo = 0;
            Eigen::Index hi = d - 1;
            while (lo <= hi && std::abs(p(i, lo)) <= limit) ++lo;
            while (hi >= lo && std::abs(p(i, hi)) <= limit) --hi;
            first_[static_cast<std::size_t>(i)] = lo;
            last_[static_cast<std::size_t>(i)] = hi;
            for (Eigen::Index j = 0; j < d; ++j) {
                if (j < lo || j > hi) dropped_ = std::max(dropped_, std::abs(p(i, j)));
            }
        }
    }

    /// Largest absolute entry left out.
    double dropped() const { return dropped_; }

    /// Widest row range, as a half bandwidth about the diagonal.
    Eigen::Index half_band() const {
        Eigen::Index k = 0;
        for (std::size_t i = 0; i < first_.size(); ++i) {
            const auto row = static_cast<Eigen::Index>(i);
            k = std::max({k, row - first_[i], last_[i] - row});
        }
        return k;
    }

    void apply(const DensityBlock& in, DensityBlock& out) const {
        const Eigen::Index d = p_->rows();
        const Eigen::Index n = in.cols();
        if (in.rows() != d) throw InvalidParameter("PropagatorApply: block height does not match the grid");
        out.resize(d, n);
        Eigen::Index lead = 0;
        while (lead < d && (in.row(lead).array() == 0.0).all()) ++lead;
        const double* v = in.data();
        for (Eigen::Index i = 0; i < d; ++i) {
            const Eigen::Index j0 = std::max(lead, first_[static_cast<std::size_t>(i)]);
            const Eigen::Index j1 = last_[static_cast<std::size_t>(i)];
            double* o = out.data() + i * n;
            Eigen::Index c0 = 0;
            for (; c0 + kChunk <= n; c0 += kChunk) accumulate<kChunk>(i, j0, j1, v + c0, n, o + c0);
            for (; c0 < n; ++c0) accumulate<1>(i, j0, j1, v + c0, n, o + c0);
        }
    }

    DensityVector apply(const DensityVector& u) const {
        DensityBlock in = u;
        DensityBlock out;
        apply(in, out);
        return Eigen::Map<const DensityVector>(out.data(), out.rows());
    }

private:
    static constexpr Eigen::Index kChunk = 64;

    template <Eigen::Index W>
    void accumulate(Eigen::Index i, Eigen::Index j0, Eigen::Index j1, const double* v, Eigen::Index stride,
                    double* o) const {
        double acc[W] = {};
        for (Eigen::Index j = j0; j <= j1; ++j) {
            const double pij = (*p_)(i, j);
            const double* row = v + j * stride;
            for (Eigen::Index c = 0; c < W; ++c) acc[c] += pij * row[c];
        }
        for (Eigen::Index c = 0; c < W; ++c) o[c] = acc[c];
    }

    const PropagatorMatrix* p_ = nullptr;
    std::vector<Eigen::Index> first_;
    std::vector<Eigen::Index> last_;
    double dropped_ = 0.0;
};

/// LU factorisation of tridiag(sub, diag, sup) for repeated Thomas solves.
class TridiagFactorization {
public:
    TridiagFactorization() = default;

    explicit TridiagFactorization(const TridiagOperator& t) : op_(t) {
        const auto n = static_cast<std::size_t>(t.d);
        upper_.resize(n);
        inv_pivot_.resize(n);
        double pivot = t.diag;
        for (std::size_t i = 0; i < n; ++i) {
            if (i > 0) pivot = t.diag - t.sub * upper_[i - 1];
            if (!(std::abs(pivot) > 1e-300) || !std::isfinite(pivot)) {
                throw NumericError("TridiagFactorization: zero pivot at row " + std::to_string(i));
            }
            inv_pivot_[i] = 1.0 / pivot;
            upper_[i] = t.sup * inv_pivot_[i];
        }
    }

    const TridiagOperator& matrix() const { return op_; }

    void solve(std::span<double> x) const {
        const std::size_t n = upper_.size();
        x[0] *= inv_pivot_[0];
        for (std::size_t i = 1; i < n; ++i) x[i] = (x[i] - op_.sub * x[i - 1]) * inv_pivot_[i];
        for (std::size_t i = n - 1; i-- > 0;) x[i] -= upper_[i] * x[i + 1];
    }

    DensityVector solve(DensityVector r) const {
        solve(std::span<double>(r.data(), static_cast<std::size_t>(r.size())));
        return r;
    }

    /// In-place solve for every column of a block.
    void solve(DensityBlock& x) const {
        const auto n = static_cast<Eigen::Index>(upper_.size());
        x.row(0) *= inv_pivot_[0];
        for (Eigen::Index i = 1; i < n; ++i) {
            x.row(i) = (x.row(i) - op_.sub * x.row(i - 1)) * inv_pivot_[static_cast<std::size_t>(i)];
        }
        for (Eigen::Index i = n - 1; i-- > 0;) x.row(i) -= upper_[static_cast<std::size_t>(i)] * x.row(i + 1);
    }

    /// max |L U - T| over all entries.
    double reconstruction_error() const {
        const int n = op_.d;
        DenseMatrix L = DenseMatrix::Zero(n, n);
        DenseMatrix U = DenseMatrix::Identity(n, n);
        for (int i = 0; i < n; ++i) {
            L(i, i) = 1.0 / inv_pivot_[static_cast<std::size_t>(i)];
            if (i > 0) L(i, i - 1) = op_.sub;
            if (i + 1 < n) U(i, i + 1) = upper_[static_cast<std::size_t>(i)];
        }
        return (L * U - op_.dense()).cwiseAbs().maxCoeff();
    }

private:
    TridiagOperator op_;
    std::vector<double> upper_;
    std::vector<double> inv_pivot_;
};

/// (I - theta dt C) u_{l+1} = (I + (1 - theta) dt C) u_l with the left
/// operator factorised once.
struct ThetaSolverPlan {
    double theta = 0.5;
    double dt = 0.0;
    TridiagOperator right;
    TridiagFactorization left;
    bool implicit = false;
};

inline TridiagOperator identity_plus(const TridiagOperator& t, double s) {
    return {t.d, s * t.sub, 1.0 + s * t.diag, s * t.sup};
}

inline ThetaSolverPlan make_theta_plan(const TridiagOperator& C, double dt, double theta) {
    if (!(theta >= 0.0 && theta <= 1.0)) throw InvalidParameter("theta must lie in [0, 1]");
    if (!(dt > 0.0)) throw InvalidParameter("theta plan: dt must be positive");
    ThetaSolverPlan plan;
    plan.theta = theta;
    plan.dt = dt;
    plan.right = identity_plus(C, (1.0 - theta) * dt);
    plan.implicit = theta > 0.0;
    if (plan.implicit) plan.left = TridiagFactorization(identity_plus(C, -theta * dt));
    return plan;
}

inline DensityVector step_theta(const ThetaSolverPlan& plan, const DensityVector& u) {
    DensityVector rhs = plan.right.apply(u);
    return plan.implicit ? plan.left.solve(std::move(rhs)) : rhs;
}

inline void step_theta(const ThetaSolverPlan& plan, DensityBlock& u, DensityBlock& work) {
    if (plan.theta == 1.0) {
        plan.left.solve(u);
        return;
    }
    plan.right.apply(u, work);
    if (plan.implicit) plan.left.solve(work);
    u.swap(work);
}

/// Theta scheme over one interval with L time points, optionally starting
/// with implicit-Euler half steps (Rannacher start-up).
class ThetaQuarterStepper {
public:
    ThetaQuarterStepper(const TridiagOperator& C, double quarter, int points, double theta, bool rannacher,
                        int half_steps = 4) {
        if (points < 2) throw InvalidParameter("theta scheme: need at least 2 time points per interval");
        if (half_steps < 0 || half_steps % 2 != 0) {
            throw InvalidParameter("theta scheme: Rannacher half steps must be even and >= 0");
        }
        steps_ = points - 1;
        const double dt = quarter / steps_;
        main_ = make_theta_plan(C, dt, theta);
        half_steps_ = rannacher ? std::min(half_steps, 2 * steps_) : 0;
        if (half_steps_ > 0) startup_ = make_theta_plan(C, 0.5 * dt, 1.0);
    }

    void evolve(DensityBlock& u) const {
        DensityBlock work;
        for (int h = 0; h < half_steps_; ++h) step_theta(startup_, u, work);
        for (int l = half_steps_ / 2; l < steps_; ++l) step_theta(main_, u, work);
    }

    DensityVector evolve(const DensityVector& u) const {
        DensityBlock block = u;
        evolve(block);
        return Eigen::Map<const DensityVector>(block.data(), block.rows());
    }

    const ThetaSolverPlan& main_plan() const { return main_; }

private:
    int steps_ = 0;
    int half_steps_ = 0;
    ThetaSolverPlan main_;
    ThetaSolverPlan startup_;
};

/// Natural cubic spline through (x_i, u_i), i = 0..d+1, with u_0 = u_{d+1} = 0,
/// sampled at x_i - shift; zero outside [a, b].
class SplineShifter {
public:
    explicit SplineShifter(const SpaceGrid& grid)
        : grid_(grid), moments_(TridiagOperator{grid.d(), 1.0, 4.0, 1.0}), dxx6_(second_difference(grid).scaled(6.0)) {}

    DensityVector shift(const DensityVector& u, double shift) const {
        DensityBlock block = u;
        Eigen::RowVectorXd s(1);
        s(0) = shift;
        this->shift(block, s);
        return Eigen::Map<const DensityVector>(block.data(), block.rows());
    }

    /// Shifts column p of the block by shifts(p). Returns the number of
    /// columns whose shift exceeded (b - a) / 2.
    std::size_t shift(DensityBlock& u, const Eigen::RowVectorXd& shifts) const {
        const Eigen::Index d = grid_.d();
        const Eigen::Index n = u.cols();
        const double dx = grid_.dx();
        if (shifts.size() != n) throw InvalidParameter("spline_shift: one shift per column required");
        DensityBlock m;
        dxx6_.apply(u, m);
        moments_.solve(m);

        // Values and moments on nodes 0..d+1, padded by kPad zero rows per side.
        const Eigen::Index rows = d + 2 + 2 * kPad;
        DensityBlock values = DensityBlock::Zero(rows, n);
        DensityBlock moments = DensityBlock::Zero(rows, n);
        values.middleRows(kPad + 1, d) = u;
        moments.middleRows(kPad + 1, d) = m;

        std::vector<Eigen::Index> offset(static_cast<std::size_t>(n));
        std::vector<double> ws(static_cast<std::size_t>(n)), wt(static_cast<std::size_t>(n));
        std::vector<double> ca(static_cast<std::size_t>(n)), cb(static_cast<std::size_t>(n));
        std::vector<Eigen::Index> far_columns;
        std::size_t far = 0;
        const double half_width = 0.5 * (grid_.b() - grid_.a());
        for (Eigen::Index p = 0; p < n; ++p) {
            const auto k = static_cast<std::size_t>(p);
            const double sigma = shifts(p) / dx;
            if (!std::isfinite(sigma)) throw NumericError("spline_shift: non-finite shift");
            if (std::abs(shifts(p)) > half_width) ++far;
            const double fl = std::floor(-sigma);
            const double t = -sigma - fl;
            const double s = 1.0 - t;
            ws[k] = s;
            wt[k] = t;
            ca[k] = dx * dx / 6.0 * (s * s * s - s);
            cb[k] = dx * dx / 6.0 * (t * t * t - t);
            // Interval of node i starts at node i + offset.
            if (std::abs(fl) > static_cast<double>(kPad - 1)) {
                far_columns.push_back(p);
                offset[k] = 0;
                ws[k] = wt[k] = ca[k] = cb[k] = 0.0;
            } else {
                offset[k] = static_cast<Eigen::Index>(fl);
            }
        }

        const double* U = values.data();
        const double* M = moments.data();
        for (Eigen::Index i = 1; i <= d; ++i) {
            double* out = u.data() + (i - 1) * n;
            for (Eigen::Index p = 0; p < n; ++p) {
                const auto k = static_cast<std::size_t>(p);
                const Eigen::Index j = (i + offset[k] + kPad) * n + p;
                out[p] = ws[k] * U[j] + wt[k] * U[j + n] + ca[k] * M[j] + cb[k] * M[j + n];
            }
        }

        // Large shifts: evaluate column by column.
        for (Eigen::Index p : far_columns) {
            const double sigma = shifts(p) / dx;
            const double fl = std::floor(-sigma);
            const double t = -sigma - fl;
            const double s = 1.0 - t;
            const double a3 = dx * dx / 6.0 * (s * s * s - s);
            const double b3 = dx * dx / 6.0 * (t * t * t - t);
            auto node = [&](const DensityBlock& src, double j) {
                return j >= 1.0 && j <= static_cast<double>(d) ? src(kPad + static_cast<Eigen::Index>(j), p) : 0.0;
            };
            for (Eigen::Index i = 1; i <= d; ++i) {
                const double j = static_cast<double>(i) + fl;
                u(i - 1, p) = s * node(values, j) + t * node(values, j + 1.0) + a3 * node(moments, j) +
                              b3 * node(moments, j + 1.0);
            }
        }
        return far;
    }

private:
    static constexpr Eigen::Index kPad = 16;

    SpaceGrid grid_;
    TridiagFactorization moments_;
    TridiagOperator dxx6_;
};

inline DensityVector spline_shift(const DensityVector& u, const SpaceGrid& grid, double shift) {
    return SplineShifter(grid).shift(u, shift);
}

enum class PdeScheme { Theta, DeterministicMagnus };

/// Propagates a block through one interval with the shifted PDE, then shifts
/// each column by its own sqrt(rho) dM. Returns the far-shift count.
inline std::size_t evolve_quarter_pde(DensityBlock& block, PdeScheme scheme, const ThetaQuarterStepper* theta,
                                      const PropagatorApply* propagator, const SplineShifter& spline,
                                      const Eigen::RowVectorXd& shifts) {
    if (scheme == PdeScheme::Theta) {
        if (theta == nullptr) throw InvalidParameter("evolve_quarter_pde: theta stepper missing");
        theta->evolve(block);
    } else {
        if (propagator == nullptr) throw InvalidParameter("evolve_quarter_pde: propagator missing");
        DensityBlock next;
        propagator->apply(block, next);
        block.swap(next);
    }
    if (shifts.cwiseAbs().maxCoeff() == 0.0) return 0;
    return spline.shift(block, shifts);
}

} // namespace lbcdo
