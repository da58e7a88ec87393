#include <gtest/gtest.h>

#include <cmath>

#include "ats/metrics.hpp"
#include "support.hpp"

using namespace ats;
using V = std::vector<double>;

TEST(Spearman, PerfectAndReversed) {
    EXPECT_NEAR(metrics::spearman_rho(V{1, 2, 3, 4}, V{10, 20, 30, 40}), 1.0, 1e-15);
    EXPECT_NEAR(metrics::spearman_rho(V{1, 2, 3, 4}, V{4, 3, 2, 1}), -1.0, 1e-15);
    // monotone but nonlinear
    EXPECT_NEAR(metrics::spearman_rho(V{1, 2, 3, 4}, V{1, 8, 27, 64}), 1.0, 1e-15);
}

TEST(Spearman, TiesUseAverageRanks) {
    EXPECT_EQ(metrics::average_ranks(V{10, 20, 20, 5}), (V{2, 3.5, 3.5, 1}));
    // ranks (1, 2.5, 2.5, 4) vs (1, 3, 2, 4): cov 4.5, variances 4.5 and 5
    EXPECT_NEAR(metrics::spearman_rho(V{1, 2, 2, 4}, V{1, 3, 2, 4}), 4.5 / std::sqrt(22.5), 1e-15);
}

TEST(Pearson, HandExamples) {
    EXPECT_NEAR(metrics::pearson_r(V{1, 2, 3}, V{2, 4, 6}), 1.0, 1e-15);
    EXPECT_NEAR(metrics::pearson_r(V{1, 2, 3}, V{1, 3, 2}), 0.5, 1e-15);
    EXPECT_THROW(metrics::pearson_r(V{1, 1, 1}, V{1, 2, 3}), metrics::UndefinedCorrelation);
    EXPECT_THROW(metrics::spearman_rho(V{1, 2}, V{5, 5}), metrics::UndefinedCorrelation);
    EXPECT_THROW(metrics::pearson_r(V{1, 2}, V{1, 2, 3}), ShapeError);
}

TEST(Rmse, HandExamples) {
    EXPECT_EQ(metrics::rmse(V{1, 2, 3}, V{1, 2, 3}), 0.0);
    EXPECT_NEAR(metrics::rmse(V{0, 0}, V{1, 2}), std::sqrt(2.5), 1e-15);
    EXPECT_NEAR(metrics::rmse(V{3}, V{-1}), 4.0, 1e-15);
}

TEST(Qwk, IdentityAndAntiDiagonal) {
    EXPECT_NEAR(metrics::quadratic_weighted_kappa(V{0, 1, 2, 3}, V{0, 1, 2, 3}, {0, 3}), 1.0, 1e-15);
    EXPECT_NEAR(metrics::quadratic_weighted_kappa(V{0, 3}, V{3, 0}, {0, 3}), -1.0, 1e-15);
}

TEST(Qwk, RoundsHalfAwayFromZeroAndClamps) {
    EXPECT_EQ(metrics::discretize(2.5, 0, 10), 3);
    EXPECT_EQ(metrics::discretize(-0.5, -5, 5), -1);
    EXPECT_EQ(metrics::discretize(11.7, 0, 10), 10);
    EXPECT_EQ(metrics::discretize(-3.0, 0, 10), 0);
    EXPECT_NEAR(metrics::quadratic_weighted_kappa(V{-0.4, 1.5, 9.2}, V{0, 2, 6}, {0, 6}), 1.0, 1e-15);
}

TEST(Qwk, InvariantUnderShiftOfScale) {
    Rng rng(12);
    V pred, gold, pred2, gold2;
    for (int k = 0; k < 40; ++k) {
        gold.push_back(static_cast<double>(rng.index(7)));
        pred.push_back(rng.uniform(-1, 7));
        gold2.push_back(gold.back() + 5);
        pred2.push_back(pred.back() + 5);
    }
    EXPECT_NEAR(metrics::quadratic_weighted_kappa(pred, gold, {0, 6}),
                metrics::quadratic_weighted_kappa(pred2, gold2, {5, 11}), 1e-14);
}

TEST(Qwk, RejectsNonIntegerGoldAndDegenerateRange) {
    EXPECT_THROW(metrics::quadratic_weighted_kappa(V{1}, V{1.5}, {0, 3}), DataError);
    EXPECT_THROW(metrics::quadratic_weighted_kappa(V{1}, V{1}, {2, 2}), DataError);
}

TEST(Report, PerfectPredictions) {
    const V gold{1, 4, 2, 8, 5};
    const auto r = metrics::report(gold, gold, {0, 10});
    EXPECT_EQ(r.n, 5u);
    EXPECT_NEAR(r.spearman_rho, 1.0, 1e-15);
    EXPECT_NEAR(r.pearson_r, 1.0, 1e-15);
    EXPECT_EQ(r.rmse, 0.0);
    EXPECT_NEAR(r.qwk, 1.0, 1e-15);
    EXPECT_EQ(metrics::csv_row("m", r).substr(0, 4), "m,5,");
}

TEST(Property, AgreeWithBruteForceOnRandomPairs) {
    Rng rng(2024);
    for (int trial = 0; trial < 60; ++trial) {
        const auto n = 2 + rng.index(40);
        V pred, gold;
        for (std::size_t k = 0; k < n; ++k) {
            gold.push_back(static_cast<double>(rng.index(5)));
            // coarse values force ties
            pred.push_back(trial % 2 ? std::round(rng.uniform(-1, 5) * 2) / 2 : rng.uniform(-1, 5));
        }
        if (*std::min_element(gold.begin(), gold.end()) == *std::max_element(gold.begin(), gold.end())) continue;
        if (*std::min_element(pred.begin(), pred.end()) == *std::max_element(pred.begin(), pred.end())) continue;
        EXPECT_NEAR(metrics::spearman_rho(pred, gold), oracle::brute::spearman(pred, gold), 1e-12);
        EXPECT_NEAR(metrics::pearson_r(pred, gold), oracle::brute::pearson(pred, gold), 1e-12);
        EXPECT_NEAR(metrics::rmse(pred, gold), oracle::brute::rmse(pred, gold), 1e-12);
        EXPECT_NEAR(metrics::quadratic_weighted_kappa(pred, gold, {0, 4}), oracle::brute::qwk(pred, gold, 0, 4), 1e-12);
    }
}

TEST(Property, CorrelationsAreSymmetricAndBounded) {
    Rng rng(77);
    for (int trial = 0; trial < 30; ++trial) {
        V a, b;
        for (int k = 0; k < 25; ++k) {
            a.push_back(rng.uniform(-3, 3));
            b.push_back(rng.uniform(-3, 3));
        }
        const double r = metrics::pearson_r(a, b), rho = metrics::spearman_rho(a, b);
        EXPECT_EQ(r, metrics::pearson_r(b, a));
        EXPECT_LE(std::abs(r), 1.0);
        EXPECT_LE(std::abs(rho), 1.0);
    }
}
