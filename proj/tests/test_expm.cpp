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


#include <cmath>
#include <random>

#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "lbcdo/errors.hpp"
#include "lbcdo/expm.hpp"

namespace {

using namespace lbcdo;

DenseMatrix random_sparse(int d, double density, double scale, unsigned seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::bernoulli_distribution keep(density);
    DenseMatrix m = DenseMatrix::Zero(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            if (i == j || keep(gen)) m(i, j) = scale * u(gen);
        }
    }
    return m;
}

TEST(ExpmAction, ZeroOperatorIsIdentity) {
    const DenseMatrix v = DenseMatrix::Random(16, 3);
    EXPECT_EQ(expm_action(DenseMatrix::Zero(16, 16), v), v);
}

TEST(ExpmAction, DiagonalScalesEntries) {
    DenseMatrix y = DenseMatrix::Zero(5, 5);
    for (int i = 0; i < 5; ++i) y(i, i) = -2.0 + i;
    const DenseMatrix v = DenseMatrix::Ones(5, 2);
    const DenseMatrix out = expm_action(y, v);
    for (int i = 0; i < 5; ++i) {
        EXPECT_NEAR(out(i, 0), std::exp(-2.0 + i), 1e-13 * std::exp(-2.0 + i));
        EXPECT_NEAR(out(i, 1), std::exp(-2.0 + i), 1e-13 * std::exp(-2.0 + i));
    }
}

TEST(ExpmAction, MatchesDenseExponential) {
    for (unsigned seed = 0; seed < 10; ++seed) {
        const DenseMatrix y = random_sparse(16, 0.2, 1.0 + seed, seed);
        const DenseMatrix v = DenseMatrix::Random(16, 4);
        const DenseMatrix exact = y.exp() * v;
        const DenseMatrix approx = expm_action(y, v);
        EXPECT_LE((approx - exact).norm() / exact.norm(), 1e-8) << "seed " << seed;
    }
}

TEST(ExpmAction, BandedOperatorMatchesDense) {
    const SpaceGrid g(-2.0, 3.0, 16);
    const auto ops = build_operators(g, ModelParams({0.015, 0.1, 0.3}));
    const BandedMatrix y = axpby(0.25, BandedMatrix(ops.B), 0.4, BandedMatrix(ops.A));
    DensityVector v(16);
    for (int k = 0; k < 16; ++k) v(k) = std::exp(-g.interior(k) * g.interior(k));
    const DensityVector exact = y.dense().exp() * v;
    EXPECT_LE((expm_action(y, v) - exact).norm() / exact.norm(), 1e-8);
}

TEST(ExpmAction, Linear) {
    const DenseMatrix y = random_sparse(16, 0.3, 2.0, 42);
    const DenseMatrix v1 = DenseMatrix::Random(16, 2);
    const DenseMatrix v2 = DenseMatrix::Random(16, 2);
    const double a = 0.7;
    const DenseMatrix lhs = expm_action(y, a * v1 + v2);
    const DenseMatrix rhs = a * expm_action(y, v1) + expm_action(y, v2);
    EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12 * rhs.cwiseAbs().maxCoeff());
}

TEST(ExpmAction, ReportsNonConvergence) {
    const DenseMatrix y = random_sparse(16, 0.5, 3.0, 1);
    ExpmOptions opt;
    opt.max_terms = 2;
    EXPECT_THROW(expm_action(y, DenseMatrix::Ones(16, 1), opt), NumericError);
    DenseMatrix bad = y;
    bad(0, 0) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(expm_action(bad, DenseMatrix::Ones(16, 1)), NumericError);
}

} // namespace
