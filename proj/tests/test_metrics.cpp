#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rfgnn/metrics.hpp"
#include "rfgnn/rng.hpp"

using namespace rfgnn;

TEST(WeightedF1, HandComputedExample) {
  const std::vector<int> y{0, 0, 1, 1, 1}, p{0, 1, 1, 1, 0};
  EXPECT_EQ(weighted_f1(y, p, 2), 0.6);
}

TEST(WeightedF1, PerfectAndFlipped) {
  const std::vector<int> y{0, 1, 0, 1, 1, 0};
  EXPECT_EQ(weighted_f1(y, y, 2), 1.0);
  std::vector<int> flipped;
  for (int v : y) flipped.push_back(1 - v);
  EXPECT_EQ(weighted_f1(y, flipped, 2), 0.0);
}

TEST(WeightedF1, NeverPredictedClassScoresZero) {
  const std::vector<int> y{0, 0, 1, 1}, p{0, 0, 0, 0};
  // class 0: P=1/2, R=1 -> F1=2/3; class 1: 0
  EXPECT_NEAR(weighted_f1(y, p, 2), 0.5 * (2.0 / 3.0), 1e-15);
}

TEST(WeightedF1, LengthMismatchThrows) {
  const std::vector<int> y{0, 1}, p{0};
  EXPECT_THROW(weighted_f1(y, p, 2), PreconditionError);
}

TEST(WeightedF1, MatchesPrecisionRecallFormulation) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int c = 2 + static_cast<int>(rng.index(4));
    const int n = 1 + static_cast<int>(rng.index(40));
    std::vector<int> y(n), p(n);
    for (int i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng.index(c));
      p[i] = static_cast<int>(rng.index(c));
    }
    const double w = weighted_f1(y, p, c);
    EXPECT_NEAR(w, oracle::weighted_f1(y, p, c), 1e-12);
    EXPECT_GE(w, 0.0);
    EXPECT_LE(w, 1.0);
  }
}

TEST(AggregateSeeds, SingleAndPair) {
  const std::vector<double> one{0.73};
  EXPECT_EQ(aggregate_seeds(one).mean, 0.73);
  EXPECT_EQ(aggregate_seeds(one).std, 0.0);
  const std::vector<double> two{0.8, 0.9};
  EXPECT_NEAR(aggregate_seeds(two).mean, 0.85, 1e-12);
  EXPECT_NEAR(aggregate_seeds(two).std, 0.05, 1e-12);
  EXPECT_THROW(aggregate_seeds(std::vector<double>{}), PreconditionError);
}

TEST(AggregateSeeds, OrderInvariant) {
  std::vector<double> s{0.91, 0.123456789, 0.5, 0.77, 0.333333333333, 0.1};
  const auto ref = aggregate_seeds(s);
  std::ranges::sort(s);
  do {
    const auto got = aggregate_seeds(s);
    ASSERT_EQ(got.mean, ref.mean);
    ASSERT_EQ(got.std, ref.std);
  } while (std::ranges::next_permutation(s).found);
}
