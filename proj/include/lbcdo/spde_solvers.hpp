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
#include <limits>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "lbcdo/discretization.hpp"
#include "lbcdo/driver.hpp"
#include "lbcdo/errors.hpp"
#include "lbcdo/expm.hpp"

namespace lbcdo {

/// v + dt B v + dM A v.
inline DensityVector step_euler_maruyama(const DensityVector& v, const TridiagOperator& A, const TridiagOperator& B,
                                         double dt, double dM) {
    return v + dt * B.apply(v) + dM * A.apply(v);
}

/// Euler-Maruyama step on a block with one increment per column. `work` is scratch.
inline void step_euler_maruyama(DensityBlock& v, DensityBlock& work, const TridiagOperator& A,
                                const TridiagOperator& B, double dt, const Eigen::RowVectorXd& dM) {
    const Eigen::Index n = v.rows();
    work.resize(v.rows(), v.cols());
    // Row i of (I + dt B) v + diag(dM) A v, A having a zero diagonal.
    const double bl = dt * B.sub;
    const double bd = 1.0 + dt * B.diag;
    const double bu = dt * B.sup;
    for (Eigen::Index i = 0; i < n; ++i) {
        auto out = work.row(i);
        out = bd * v.row(i);
        if (i > 0) {
            out += bl * v.row(i - 1);
            out.array() += A.sub * v.row(i - 1).array() * dM.array();
        }
        if (i + 1 < n) {
            out += bu * v.row(i + 1);
            out.array() += A.sup * v.row(i + 1).array() * dM.array();
        }
        if (A.diag != 0.0) out.array() += A.diag * v.row(i).array() * dM.array();
    }
    v.swap(work);
}

namespace detail {
inline BandedMatrix abs(const BandedMatrix& x) {
    BandedMatrix out(x.d(), x.half_bandwidth());
    for (int i = 0; i < x.d(); ++i) {
        for (int j = std::max(0, i - x.half_bandwidth()); j <= std::min(x.d() - 1, i + x.half_bandwidth()); ++j) {
            out.at(i, j) = std::abs(x.get(i, j));
        }
    }
    return out;
}
} // namespace detail

/// XY - YX. Entries below the rounding bound of the two products are set to
/// exact zero, so cancellations that hold for the exact operators survive
/// (FMA contraction otherwise leaves residue of order eps).
inline BandedMatrix commutator(const BandedMatrix& x, const BandedMatrix& y) {
    BandedMatrix c = x * y - y * x;
    const BandedMatrix ax = detail::abs(x), ay = detail::abs(y);
    const BandedMatrix bound = ax * ay + ay * ax;
    const double eps = 8.0 * std::numeric_limits<double>::epsilon() * (x.half_bandwidth() + y.half_bandwidth() + 1);
    for (int i = 0; i < c.d(); ++i) {
        for (int j = std::max(0, i - c.half_bandwidth()); j <= std::min(c.d() - 1, i + c.half_bandwidth()); ++j) {
            if (std::abs(c.get(i, j)) <= eps * bound.get(i, j)) c.at(i, j) = 0.0;
        }
    }
    return c;
}

/// Matrix logarithm of the fundamental solution over one interval.
struct MagnusLog {
    BandedMatrix Y;
};

/// Nonzero entries of a sparse matrix, applied row by row.
struct SparseEntries {
    struct Entry {
        int row;
        int col;
        double value;
    };
    std::vector<Entry> entries;

    static SparseEntries from(const BandedMatrix& m) {
        SparseEntries out;
        const int k = m.half_bandwidth();
        for (int i = 0; i < m.d(); ++i) {
            for (int j = std::max(0, i - k); j <= std::min(m.d() - 1, i + k); ++j) {
                if (m.get(i, j) != 0.0) out.entries.push_back({i, j, m.get(i, j)});
            }
        }
        return out;
    }

    double norm1(int d) const {
        std::vector<double> col(static_cast<std::size_t>(d), 0.0);
        for (const auto& e : entries) col[static_cast<std::size_t>(e.col)] += std::abs(e.value);
        double best = 0.0;
        for (double c : col) best = std::max(best, c);
        return best;
    }
};

/// Parameter-independent pieces of the constant-coefficient Magnus logarithm
/// over an interval of length t:
///   order 1: Y = B t + A M_t
///   order 2: Y = B t + A M_t - A^2 t / 2 + [B, A] (int_0^t M_s ds - t M_t / 2)
class MagnusTerms {
public:
    MagnusTerms(const TridiagOperator& A, const TridiagOperator& B, double t, int order)
        : order_(order), t_(t), noise_(A) {
        if (order != 1 && order != 2) throw InvalidParameter("MagnusTerms: order must be 1 or 2");
        if (!(t > 0.0)) throw InvalidParameter("MagnusTerms: t must be positive");
        const BandedMatrix b(B);
        if (order == 1) {
            drift_ = t * b;
            commutator_ = BandedMatrix(A.d, 0);
        } else {
            drift_ = t * b - (0.5 * t) * (noise_ * noise_);
            commutator_ = commutator(b, noise_);
        }
        corners_ = SparseEntries::from(commutator_);
    }

    int order() const { return order_; }
    double t() const { return t_; }
    const BandedMatrix& drift() const { return drift_; }
    const BandedMatrix& noise() const { return noise_; }
    const BandedMatrix& commutator_part() const { return commutator_; }
    const SparseEntries& commutator_entries() const { return corners_; }

    /// Scalar multiplying [B, A]: int_0^t M_s ds - t M_t / 2 (zero for order 1).
    double commutator_weight(double m_t, double int_m) const { return order_ == 2 ? int_m - 0.5 * t_ * m_t : 0.0; }

    MagnusLog log(double m_t, double int_m) const {
        BandedMatrix y = axpby(1.0, drift_, m_t, noise_);
        if (order_ == 2) y = axpby(1.0, y, commutator_weight(m_t, int_m), commutator_);
        return {std::move(y)};
    }

private:
    int order_;
    double t_;
    BandedMatrix drift_;
    BandedMatrix noise_;
    BandedMatrix commutator_;
    SparseEntries corners_;
};

inline MagnusLog magnus_log_order2(const TridiagOperator& A, const TridiagOperator& B, double t, double m_t,
                                   double int_m, int order = 2) {
    return MagnusTerms(A, B, t, order).log(m_t, int_m);
}

/// Y_p = drift + m_p A + c_p [B, A] for each column p of a block.
class MagnusBlockOperator {
public:
    MagnusBlockOperator(const MagnusTerms& terms, Eigen::RowVectorXd m, Eigen::RowVectorXd c)
        : terms_(terms), m_(std::move(m)), c_(std::move(c)) {}

    void apply(const DensityBlock& in, DensityBlock& out) const {
        terms_.drift().apply(in, out);
        terms_.noise().apply(in, noise_work_);
        noise_work_.array().rowwise() *= m_.array();
        out += noise_work_;
        if (terms_.order() == 2) {
            for (const auto& e : terms_.commutator_entries().entries) {
                out.row(e.row).array() += e.value * in.row(e.col).array() * c_.array();
            }
        }
    }

    double norm1() const {
        const int d = terms_.drift().d();
        double n = terms_.drift().norm1() + m_.cwiseAbs().maxCoeff() * terms_.noise().norm1();
        if (terms_.order() == 2) n += c_.cwiseAbs().maxCoeff() * terms_.commutator_entries().norm1(d);
        return n;
    }

private:
    const MagnusTerms& terms_;
    Eigen::RowVectorXd m_;
    Eigen::RowVectorXd c_;
    mutable DensityBlock noise_work_;
};

enum class SpdeScheme { EulerMaruyama, Magnus };

/// Everything needed to advance a block through one resettlement interval
/// with the SPDE schemes.
struct SpdeQuarterPlan {
    SpdeQuarterPlan(const TridiagOperator& a, const TridiagOperator& b, double quarter, int em_points,
                    int sm_points, int magnus_order, ExpmOptions expm_options = {})
        : A(a), B(b), quarter_length(quarter), em_points(em_points), sm_points(sm_points),
          magnus(a, b, quarter, magnus_order), expm(expm_options) {
        if (em_points < 2 || sm_points < 2) throw InvalidParameter("SpdeQuarterPlan: need at least 2 time points");
    }

    TridiagOperator A;
    TridiagOperator B;
    double quarter_length;
    int em_points;
    int sm_points;
    MagnusTerms magnus;
    ExpmOptions expm;
};

/// Advances columns [first_path, first_path + block.cols()) through quarter q.
/// The block must already be truncated at the barrier.
inline void evolve_quarter_spde(DensityBlock& block, SpdeScheme scheme, const CommonFactorDriver& driver,
                                std::size_t first_path, int q, const SpdeQuarterPlan& plan) {
    const Eigen::Index paths = block.cols();
    if (scheme == SpdeScheme::EulerMaruyama) {
        const int steps = plan.em_points - 1;
        const double dt = plan.quarter_length / steps;
        Eigen::MatrixXd increments(steps, paths);
        for (Eigen::Index p = 0; p < paths; ++p) {
            const auto inc = driver.coarse_increments(first_path + static_cast<std::size_t>(p), q, steps);
            for (int l = 0; l < steps; ++l) increments(l, p) = inc[static_cast<std::size_t>(l)];
        }
        DensityBlock work;
        Eigen::RowVectorXd dM(paths);
        for (int l = 0; l < steps; ++l) {
            dM = increments.row(l);
            step_euler_maruyama(block, work, plan.A, plan.B, dt, dM);
        }
        return;
    }
    const int steps = plan.sm_points - 1;
    Eigen::RowVectorXd m(paths);
    Eigen::RowVectorXd c(paths);
    for (Eigen::Index p = 0; p < paths; ++p) {
        const std::size_t path = first_path + static_cast<std::size_t>(p);
        m(p) = driver.quarter_increment(path, q);
        c(p) = plan.magnus.commutator_weight(m(p), driver.quarter_integral(path, q, steps));
    }
    expm_action(MagnusBlockOperator(plan.magnus, m, c), block, plan.expm);
}

} // namespace lbcdo
