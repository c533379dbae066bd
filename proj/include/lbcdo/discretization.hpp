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
#include <iostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lbcdo/core_model.hpp"
#include "lbcdo/errors.hpp"

namespace lbcdo {

using DensityVector = Eigen::VectorXd;
/// d x P block of densities, one column per path; row-major so a row holds
/// one grid node across all paths of the block.
using DensityBlock = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using DenseMatrix = Eigen::MatrixXd;

/// Tolerance for small negative densities produced by non-monotone schemes.
inline constexpr double kNegativeDensityTolerance = 1e-8;

/// Homogeneous grid x_i = a + i dx, i = 0..d+1, dx = (b - a)/(d + 1). Only the
/// d interior nodes carry unknowns; the end nodes hold zero.
class SpaceGrid {
public:
    SpaceGrid(double a, double b, int d) : a_(a), b_(b), d_(d) {
        if (!(a < 0.0 && 0.0 < b)) throw InvalidParameter("SpaceGrid: need a < 0 < b");
        if (d < 3) throw InvalidParameter("SpaceGrid: need d >= 3 interior points");
        dx_ = (b - a) / (d + 1);
        first_positive_ = 0;
        while (first_positive_ < d_ && node(first_positive_ + 1) <= 0.0) ++first_positive_;
    }

    double a() const { return a_; }
    double b() const { return b_; }
    int d() const { return d_; }
    double dx() const { return dx_; }
    /// Grid node x_i, i in [0, d+1].
    double node(int i) const { return a_ + i * dx_; }
    /// Node of the interior unknown with zero-based index k (i = k + 1).
    double interior(int k) const { return node(k + 1); }
    /// Zero-based interior index of the first node with x > 0.
    int first_positive() const { return first_positive_; }

private:
    double a_;
    double b_;
    int d_;
    double dx_ = 0.0;
    int first_positive_ = 0;
};

/// d x d tridiagonal Toeplitz matrix tridiag(sub, diag, sup). Truncation to
/// d rows is the zero-Dirichlet boundary condition.
struct TridiagOperator {
    int d = 0;
    double sub = 0.0;
    double diag = 0.0;
    double sup = 0.0;

    TridiagOperator scaled(double s) const { return {d, s * sub, s * diag, s * sup}; }

    friend TridiagOperator operator+(const TridiagOperator& x, const TridiagOperator& y) {
        return {x.d, x.sub + y.sub, x.diag + y.diag, x.sup + y.sup};
    }

    bool is_zero() const { return sub == 0.0 && diag == 0.0 && sup == 0.0; }

    void apply(std::span<const double> in, std::span<double> out) const {
        const auto n = static_cast<std::size_t>(d);
        if (n == 1) {
            out[0] = diag * in[0];
            return;
        }
        out[0] = diag * in[0] + sup * in[1];
        for (std::size_t i = 1; i + 1 < n; ++i) out[i] = sub * in[i - 1] + diag * in[i] + sup * in[i + 1];
        out[n - 1] = sub * in[n - 2] + diag * in[n - 1];
    }

    DensityVector apply(const DensityVector& v) const {
        DensityVector out(v.size());
        apply(std::span<const double>(v.data(), v.size()), std::span<double>(out.data(), out.size()));
        return out;
    }

    /// out = this * in on a block (rows are grid nodes).
    void apply(const DensityBlock& in, DensityBlock& out) const {
        const Eigen::Index n = in.rows();
        out.resize(in.rows(), in.cols());
        if (n == 1) {
            out.row(0) = diag * in.row(0);
            return;
        }
        out.row(0) = diag * in.row(0) + sup * in.row(1);
        for (Eigen::Index i = 1; i + 1 < n; ++i) {
            out.row(i) = sub * in.row(i - 1) + diag * in.row(i) + sup * in.row(i + 1);
        }
        out.row(n - 1) = sub * in.row(n - 2) + diag * in.row(n - 1);
    }

    DenseMatrix dense() const {
        DenseMatrix m = DenseMatrix::Zero(d, d);
        for (int i = 0; i < d; ++i) {
            m(i, i) = diag;
            if (i > 0) m(i, i - 1) = sub;
            if (i + 1 < d) m(i, i + 1) = sup;
        }
        return m;
    }
};

/// General banded matrix with half bandwidth k, stored by diagonals:
/// band(o, i) = M(i, i + o) for o in [-k, k].
class BandedMatrix {
public:
    BandedMatrix() = default;
    BandedMatrix(int d, int k) : d_(d), k_(k), bands_(Eigen::MatrixXd::Zero(2 * k + 1, d)) {}

    explicit BandedMatrix(const TridiagOperator& t) : BandedMatrix(t.d, 1) {
        for (int i = 0; i < d_; ++i) {
            if (i > 0) at(i, i - 1) = t.sub;
            at(i, i) = t.diag;
            if (i + 1 < d_) at(i, i + 1) = t.sup;
        }
    }

    int d() const { return d_; }
    int half_bandwidth() const { return k_; }

    double& at(int i, int j) { return bands_(j - i + k_, i); }
    double get(int i, int j) const {
        const int o = j - i;
        if (o < -k_ || o > k_ || j < 0 || j >= d_) return 0.0;
        return bands_(o + k_, i);
    }

    /// Same matrix stored with a wider band.
    BandedMatrix widened(int k) const {
        BandedMatrix out(d_, std::max(k, k_));
        for (int i = 0; i < d_; ++i) {
            for (int j = std::max(0, i - k_); j <= std::min(d_ - 1, i + k_); ++j) out.at(i, j) = get(i, j);
        }
        return out;
    }

    friend BandedMatrix operator*(const BandedMatrix& x, const BandedMatrix& y) {
        BandedMatrix out(x.d_, x.k_ + y.k_);
        for (int i = 0; i < x.d_; ++i) {
            for (int m = std::max(0, i - x.k_); m <= std::min(x.d_ - 1, i + x.k_); ++m) {
                const double xv = x.get(i, m);
                if (xv == 0.0) continue;
                for (int j = std::max(0, m - y.k_); j <= std::min(y.d_ - 1, m + y.k_); ++j) {
                    out.at(i, j) += xv * y.get(m, j);
                }
            }
        }
        return out;
    }

    friend BandedMatrix axpby(double alpha, const BandedMatrix& x, double beta, const BandedMatrix& y) {
        const int k = std::max(x.k_, y.k_);
        BandedMatrix out(x.d_, k);
        for (int i = 0; i < x.d_; ++i) {
            for (int j = std::max(0, i - k); j <= std::min(x.d_ - 1, i + k); ++j) {
                out.at(i, j) = alpha * x.get(i, j) + beta * y.get(i, j);
            }
        }
        return out;
    }

    friend BandedMatrix operator+(const BandedMatrix& x, const BandedMatrix& y) { return axpby(1.0, x, 1.0, y); }
    friend BandedMatrix operator-(const BandedMatrix& x, const BandedMatrix& y) { return axpby(1.0, x, -1.0, y); }
    friend BandedMatrix operator*(double s, const BandedMatrix& x) {
        BandedMatrix out = x;
        out.bands_ *= s;
        return out;
    }

    /// Max absolute column sum.
    double norm1() const {
        double best = 0.0;
        for (int j = 0; j < d_; ++j) {
            double s = 0.0;
            for (int i = std::max(0, j - k_); i <= std::min(d_ - 1, j + k_); ++i) s += std::abs(get(i, j));
            best = std::max(best, s);
        }
        return best;
    }

    bool is_zero() const { return bands_.isZero(0.0); }

    void apply(std::span<const double> in, std::span<double> out) const {
        for (int i = 0; i < d_; ++i) {
            double s = 0.0;
            const int j0 = std::max(0, i - k_);
            const int j1 = std::min(d_ - 1, i + k_);
            for (int j = j0; j <= j1; ++j) s += bands_(j - i + k_, i) * in[static_cast<std::size_t>(j)];
            out[static_cast<std::size_t>(i)] = s;
        }
    }

    DensityVector apply(const DensityVector& v) const {
        DensityVector out(v.size());
        apply(std::span<const double>(v.data(), v.size()), std::span<double>(out.data(), out.size()));
        return out;
    }

    /// out = this * in on a block; out must not alias in.
    void apply(const DensityBlock& in, DensityBlock& out) const {
        out.resize(in.rows(), in.cols());
        for (int i = 0; i < d_; ++i) {
            const int j0 = std::max(0, i - k_);
            const int j1 = std::min(d_ - 1, i + k_);
            out.row(i) = bands_(j0 - i + k_, i) * in.row(j0);
            for (int j = j0 + 1; j <= j1; ++j) out.row(i) += bands_(j - i + k_, i) * in.row(j);
        }
    }

    DenseMatrix dense() const {
        DenseMatrix m = DenseMatrix::Zero(d_, d_);
        for (int i = 0; i < d_; ++i) {
            for (int j = std::max(0, i - k_); j <= std::min(d_ - 1, i + k_); ++j) m(i, j) = get(i, j);
        }
        return m;
    }

private:
    int d_ = 0;
    int k_ = 0;
    Eigen::MatrixXd bands_;
};

/// Central first and second difference operators with zero-Dirichlet truncation.
inline TridiagOperator first_difference(const SpaceGrid& g) {
    const double h = 0.5 / g.dx();
    return {g.d(), -h, 0.0, h};
}

inline TridiagOperator second_difference(const SpaceGrid& g) {
    const double h = 1.0 / (g.dx() * g.dx());
    return {g.d(), h, -2.0 * h, h};
}

/// B drives the drift/diffusion of the SPDE, A its common-factor noise, and C
/// the shifted deterministic PDE.
struct OperatorBundle {
    TridiagOperator A;
    TridiagOperator B;
    TridiagOperator C;
};

inline OperatorBundle build_operators(const SpaceGrid& grid, const ModelParams& p) {
    const TridiagOperator dx = first_difference(grid);
    const TridiagOperator dxx = second_difference(grid);
    const double beta = p.beta();
    const double rho = p.rho();
    return {
        dx.scaled(-std::sqrt(rho)),
        dxx.scaled(0.5) + dx.scaled(-beta),
        dxx.scaled(0.5 * (1.0 - rho)) + dx.scaled(-beta),
    };
}

/// Projects the empirical measure of x0 onto nodal hat functions:
/// u_i = (1/(K dx)) sum_k hat_i(x0_k). Names whose hats reach the end nodes
/// lose that share of mass.
inline DensityVector smooth_initial_datum(std::span<const double> x0, const SpaceGrid& grid) {
    if (x0.empty()) throw InvalidParameter("smooth_initial_datum: empty x0");
    const int d = grid.d();
    const double dx = grid.dx();
    DensityVector u = DensityVector::Zero(d);
    const double weight = 1.0 / (static_cast<double>(x0.size()) * dx);
    std::size_t clamped = 0;
    for (double x : x0) {
        if (!std::isfinite(x)) throw InvalidParameter("smooth_initial_datum: non-finite x0");
        const double s = (x - grid.a()) / dx;
        const double fl = std::floor(s);
        const int i = static_cast<int>(fl);
        const double t = s - fl;
        bool lost = false;
        // Node i gets (1 - t), node i + 1 gets t.
        if (i >= 1 && i <= d) u(i - 1) += weight * (1.0 - t);
        else if (t < 1.0) lost = true;
        if (i + 1 >= 1 && i + 1 <= d) u(i) += weight * t;
        else if (t > 0.0) lost = true;
        if (lost) ++clamped;
    }
    if (clamped > 0) {
        std::clog << "lbcdo: warning: " << clamped << " initial distance(s) to default outside (a + dx, b - dx); "
                  << "mass clamped\n";
    }
    return u;
}

/// Trapezoidal integral with zero end values: dx * sum of interior entries.
inline double mass(const DensityVector& v, const SpaceGrid& grid) { return grid.dx() * v.sum(); }

/// Mass with negative entries clipped to zero, used when pricing.
inline double clipped_mass(const DensityVector& v, const SpaceGrid& grid) {
    return grid.dx() * v.cwiseMax(0.0).sum();
}

inline DensityVector truncate_at_barrier(DensityVector v, const SpaceGrid& grid) {
    v.head(grid.first_positive()).setZero();
    return v;
}

inline void truncate_at_barrier(DensityBlock& block, const SpaceGrid& grid) {
    block.topRows(grid.first_positive()).setZero();
}

} // namespace lbcdo
