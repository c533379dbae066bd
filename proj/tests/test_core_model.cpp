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
#include <vector>

#include <gtest/gtest.h>

#include "lbcdo/core_model.hpp"
#include "lbcdo/errors.hpp"

namespace {

using namespace lbcdo;

TEST(DeriveBeta, MatchesFormula) {
    EXPECT_NEAR(derive_beta(0.015, 0.0543), 0.2491, 5e-5);
    EXPECT_NEAR(derive_beta(0.026, 0.0294), 0.8696, 1e-4);
    const double s = 0.2;
    EXPECT_NEAR(derive_beta(0.5 * s * s, s), 0.0, 1e-15);
}

TEST(DeriveBeta, RejectsNonPositiveSigma) {
    EXPECT_THROW(derive_beta(0.01, 0.0), InvalidParameter);
    EXPECT_THROW(derive_beta(0.01, -0.1), InvalidParameter);
}

TEST(ModelParams, BetaRecomputedFromRateAndSigma) {
    for (double r : {-0.01, 0.0, 0.015, 0.05}) {
        for (double sigma : {0.01, 0.0543, 0.2, 0.5}) {
            const ModelParams p({r, sigma, 0.3});
            EXPECT_EQ(p.beta(), (r - 0.5 * sigma * sigma) / sigma);
            EXPECT_EQ(p.with(0.1, sigma).beta(), p.beta());
        }
    }
}

TEST(ModelParams, ValidatesRanges) {
    EXPECT_THROW(ModelParams({0.01, 0.6, 0.1}), InvalidParameter);  // sigma outside box
    EXPECT_THROW(ModelParams({0.01, 0.05, 1.0}), InvalidParameter); // rho = 1
    EXPECT_THROW(ModelParams({0.01, 0.05, -0.1}), InvalidParameter);
    EXPECT_THROW(ModelParams({0.01, 0.05, 0.1, 0.0}), InvalidParameter);
    EXPECT_THROW(ModelParams({0.01, 0.05, 0.1, 0.6, 0.25, 5.1}), InvalidParameter);
    EXPECT_NO_THROW(ModelParams({0.01, 0.6, 0.1, 0.6, 0.25, 5.0, SigmaBox{0.01, 1.0}}));
    const ModelParams p({0.015, 0.0543, 0.158});
    EXPECT_EQ(p.periods(), 20);
    EXPECT_EQ(p.lgd(), 0.6);
}

TEST(Schedule, QuarterlyFiveYears) {
    const Schedule s = build_schedule(0.25, 5.0, 0.015);
    ASSERT_EQ(s.size(), 20u);
    EXPECT_DOUBLE_EQ(s.dates.back(), 5.0);
    EXPECT_DOUBLE_EQ(s.discounts.back(), std::exp(-0.075));
    EXPECT_EQ(s.date(0), 0.0);
    for (std::size_t j = 1; j < s.size(); ++j) EXPECT_GT(s.dates[j], s.dates[j - 1]);
}

TEST(Schedule, SinglePeriodZeroRate) {
    const Schedule s = build_schedule(0.25, 0.25, 0.0);
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s.discounts[0], 1.0);
}

TEST(Schedule, NonIntegralMaturityThrows) { EXPECT_THROW(build_schedule(0.25, 5.1, 0.01), ScheduleError); }

TEST(MarketQuotes, SortedDescendingAndStable) {
    const MarketQuotes q({0.01, 0.03, 0.02, 0.03}, {}, 0.005);
    EXPECT_EQ(q.cds_quotes(), (std::vector<double>{0.03, 0.03, 0.02, 0.01}));
    const MarketQuotes again(q.cds_quotes(), {}, 0.005);
    EXPECT_EQ(again.cds_quotes(), q.cds_quotes());
    EXPECT_EQ(q.names(), 4u);
}

TEST(MarketQuotes, RejectsBadInput) {
    EXPECT_THROW(MarketQuotes({}, {}, 0.0), InvalidParameter);
    EXPECT_THROW(MarketQuotes({-0.01}, {}, 0.0), InvalidParameter);
    EXPECT_THROW(MarketQuotes({0.01}, {}, -1.0), InvalidParameter);
}

TEST(TrancheSpec, ValidatesAndLabels) {
    EXPECT_THROW(TrancheSpec(0.1, 0.1), InvalidParameter);
    EXPECT_THROW(TrancheSpec(0.2, 0.1), InvalidParameter);
    EXPECT_THROW(TrancheSpec(0.0, 1.5), InvalidParameter);
    EXPECT_EQ(TrancheSpec(0.03, 0.06).label, "[0.03,0.06]");
    EXPECT_EQ(TrancheSpec(0.22, 1.0).label, "[0.22,1]");
}

TEST(Bps, RoundTrip) {
    EXPECT_DOUBLE_EQ(to_bps(0.01), 100.0);
    EXPECT_DOUBLE_EQ(from_bps(152.55), 0.015255);
}

} // namespace
