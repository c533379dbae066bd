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
#include <sstream>

#include <Eigen/Dense>

#include "lbcdo/discretization.hpp"
#include "lbcdo/errors.hpp"

namespace lbcdo {

struct ExpmOptions {
    /// Target size of ||Y||_1 / s for each of the s Taylor sub-steps.
    double theta = 4.0;
    /// Relative truncation tolerance of each Taylor series.
    double tolerance = 1e-13;
    int max_terms = 80;
};

/// Dense matrix seen as an operator on blocks.
class DenseOperator {
public:
    explicit DenseOperator(const DenseMatrix& m) : m_(m) {}
    void apply(const DensityBlock& in, DensityBlock& out) const { out.noalias() = m_ * in; }
    double norm1() const { return m_.cwiseAbs().colwise().sum().maxCoeff(); }

private:
    const DenseMatrix& m_;
};

/// exp(Y) V by scaling and truncated Taylor series, never forming exp(Y).
/// Y needs apply(in, out) on DensityBlock and norm1() (an upper bound on the
/// 1-norm suffices). V is overwritten with the result.
template <class Operator>
void expm_action(const Operator& Y, DensityBlock& V, const ExpmOptions& opt = {}) {
    const double norm = Y.norm1();
    if (!std::isfinite(norm)) throw NumericError("expm_action: operator norm is not finite");
    if (norm == 0.0 || V.size() == 0) return;
    const int steps = std::max(1, static_cast<int>(std::ceil(norm / opt.theta)));

    DensityBlock term;
    DensityBlock next;
    for (int step = 0; step < steps; ++step) {
        term = V;
        double previous = term.cwiseAbs().maxCoeff();
        bool converged = previous == 0.0;
        for (int k = 1; k <= opt.max_terms && !converged; ++k) {
            Y.apply(term, next);
            term.swap(next);
            term *= 1.0 / (static_cast<double>(steps) * k);
            V += term;
            const double current = term.cwiseAbs().maxCoeff();
            const double scale = V.cwiseAbs().maxCoeff();
            if (!std::isfinite(current) || !std::isfinite(scale)) {
                throw NumericError("expm_action: series overflow");
            }
            converged = current + previous <= opt.tolerance * scale;
            previous = current;
        }
        if (!converged) {
            std::ostringstream msg;
            msg << "expm_action: Taylor series did not converge in " << opt.max_terms << " terms (||Y||_1 = " << norm
                << ", sub-steps = " << steps << ", last term = " << previous << ")";
            throw NumericError(msg.str());
        }
    }
}

inline DensityVector expm_action(const BandedMatrix& Y, const DensityVector& v, const ExpmOptions& opt = {}) {
    DensityBlock block = v;
    expm_action(Y, block, opt);
    return Eigen::Map<const DensityVector>(block.data(), block.rows());
}

inline DenseMatrix expm_action(const DenseMatrix& Y, const DenseMatrix& V, const ExpmOptions& opt = {}) {
    DensityBlock block = V;
    expm_action(DenseOperator(Y), block, opt);
    return block;
}

} // namespace lbcdo
