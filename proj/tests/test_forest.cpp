#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rfgnn/forest.hpp"
#include "rfgnn/synthetic.hpp"
#include "test_util.hpp"

using namespace rfgnn;

namespace {

struct Blobs {
  Eigen::MatrixXd X;
  std::vector<int> y;
  int c;
};

Blobs blobs(int n, int c, double sep, std::uint64_t seed, int d = 2) {
  BlobSpec spec;
  spec.n_rows = n;
  spec.n_classes = c;
  spec.n_features = d;
  spec.separation = sep;
  spec.seed = seed;
  const auto ds = make_blobs(spec);
  return {testutil::as_matrix(ds), ds.labels, c};
}

DecisionTree fit_one(const Eigen::MatrixXd& X, const std::vector<int>& y, const std::vector<int>& w,
                     ForestParams p = {}) {
  Rng rng(1);
  p.max_features = MaxFeatures::all;
  return fit_tree(X, y, w, 2, p, rng);
}

}  // namespace

TEST(FitTree, PureNodeIsSingleLeaf) {
  Eigen::MatrixXd X(4, 1);
  X << 0, 1, 2, 3;
  const auto tree = fit_one(X, {1, 1, 1, 1}, {1, 1, 1, 1});
  EXPECT_EQ(tree.n_leaves(), 1);
  EXPECT_EQ(tree.leaf_counts[0], (std::vector<std::int64_t>{0, 4}));
}

TEST(FitTree, SeparableTwoPointsSplitAtMidpoint) {
  Eigen::MatrixXd X(2, 1);
  X << 0, 1;
  const auto tree = fit_one(X, {0, 1}, {1, 1});
  ASSERT_EQ(tree.n_leaves(), 2);
  EXPECT_EQ(tree.nodes[0].feature, 0);
  EXPECT_EQ(tree.nodes[0].threshold, 0.5);
  Eigen::RowVectorXd a(1), b(1);
  a << 0.0;
  b << 1.0;
  EXPECT_NE(tree.leaf_of(a), tree.leaf_of(b));
}

TEST(FitTree, MinSamplesSplitAboveWeightTotalGivesOneLeaf) {
  Eigen::MatrixXd X(3, 1);
  X << 0, 1, 2;
  ForestParams p;
  p.min_samples_split = 5;
  EXPECT_EQ(fit_one(X, {0, 1, 0}, {1, 1, 2}, p).n_leaves(), 1);
  p.min_samples_split = 4;
  EXPECT_GT(fit_one(X, {0, 1, 0}, {1, 1, 2}, p).n_leaves(), 1);
}

TEST(FitTree, MultiplicityActsAsWeight) {
  // Two copies of row 0 versus one of row 1: leaf counts follow multiplicity.
  Eigen::MatrixXd X(3, 1);
  X << 0, 1, 5;
  const auto tree = fit_one(X, {0, 1, 1}, {2, 1, 0});
  ASSERT_EQ(tree.n_leaves(), 2);
  std::int64_t total = 0;
  for (const auto& lc : tree.leaf_counts) total += lc[0] + lc[1];
  EXPECT_EQ(total, 3);
}

TEST(FitTree, MinSamplesLeafIsRespected) {
  const auto b = blobs(200, 2, 1.0, 3);
  ForestParams p;
  p.min_samples_leaf = 20;
  const auto tree = fit_one(b.X, b.y, std::vector<int>(200, 1), p);
  for (const auto& lc : tree.leaf_counts) EXPECT_GE(lc[0] + lc[1], 20);
}

TEST(Forest, ParamsAreValidated) {
  const auto b = blobs(20, 2, 3.0, 0);
  ForestParams p;
  p.n_trees = 0;
  EXPECT_THROW(fit_forest(b.X, b.y, 2, p), PreconditionError);
  p = {};
  p.min_samples_split = 1;
  EXPECT_THROW(fit_forest(b.X, b.y, 2, p), PreconditionError);
}

TEST(Forest, BootstrapDrawsNRowsPerTree) {
  const auto b = blobs(1000, 2, 3.0, 1);
  ForestParams p;
  p.n_trees = 50;
  p.seed = 4;
  const auto f = fit_forest(b.X, b.y, 2, p);
  double oob = 0.0;
  for (int t = 0; t < 50; ++t) {
    EXPECT_EQ(f.inbag.row(t).sum(), 1000);
    EXPECT_EQ(static_cast<int>(f.oob_rows(t).size()), (f.inbag.row(t).array() == 0).count());
    oob += static_cast<double>(f.oob_rows(t).size()) / 1000.0;
  }
  EXPECT_NEAR(oob / 50.0, std::exp(-1.0), 0.015);
}

TEST(Forest, AddingTreesKeepsExistingTrees) {
  const auto b = blobs(120, 3, 2.0, 2);
  ForestParams p;
  p.seed = 17;
  p.n_trees = 5;
  const auto small = fit_forest(b.X, b.y, 3, p);
  p.n_trees = 12;
  const auto big = fit_forest(b.X, b.y, 3, p);
  EXPECT_EQ(small.inbag, big.inbag.topRows(5));
  EXPECT_EQ(apply(small, b.X), apply(big, b.X).leftCols(5));
}

TEST(Forest, DeterministicForFixedSeed) {
  const auto b = blobs(100, 2, 2.0, 5);
  ForestParams p;
  p.n_trees = 10;
  p.seed = 3;
  EXPECT_EQ(to_json(fit_forest(b.X, b.y, 2, p)), to_json(fit_forest(b.X, b.y, 2, p)));
  auto q = p;
  q.seed = 4;
  EXPECT_NE(fit_forest(b.X, b.y, 2, p).inbag, fit_forest(b.X, b.y, 2, q).inbag);
}

TEST(Forest, ApplyMatchesNodeReplay) {
  const auto b = blobs(150, 3, 1.5, 6, 4);
  ForestParams p;
  p.n_trees = 8;
  const auto f = fit_forest(b.X, b.y, 3, p);
  const auto leaves = apply(f, b.X);
  ASSERT_EQ(leaves.rows(), 150);
  ASSERT_EQ(leaves.cols(), 8);
  for (int t = 0; t < 8; ++t) {
    for (int i = 0; i < 150; ++i) {
      EXPECT_EQ(leaves(i, t), oracle::route(f.trees[t], b.X.row(i)));
      EXPECT_LT(leaves(i, t), f.trees[t].n_leaves());
    }
  }
  EXPECT_THROW(apply(f, b.X.leftCols(3)), PreconditionError);
}

TEST(Forest, LeafCountsAreInbagClassTallies) {
  const auto b = blobs(80, 2, 1.0, 7);
  ForestParams p;
  p.n_trees = 4;
  const auto f = fit_forest(b.X, b.y, 2, p);
  const auto leaves = apply(f, b.X);
  for (int t = 0; t < 4; ++t) {
    std::vector<std::vector<std::int64_t>> tally(f.trees[t].n_leaves(), std::vector<std::int64_t>(2, 0));
    for (int i = 0; i < 80; ++i) tally[leaves(i, t)][b.y[i]] += f.inbag(t, i);
    EXPECT_EQ(tally, f.trees[t].leaf_counts);
  }
}

TEST(Forest, OobPredictionMatchesBruteForceTally) {
  const auto b = blobs(300, 2, 3.0, 8);
  ForestParams p;
  p.n_trees = 60;
  const auto f = fit_forest(b.X, b.y, 2, p);
  const auto oob = oob_predict(f, b.X);
  int correct = 0;
  for (int i = 0; i < 300; ++i) {
    std::vector<double> share(2, 0.0);
    int voters = 0;
    for (int t = 0; t < 60; ++t) {
      if (f.inbag(t, i) != 0) continue;
      const auto& lc = f.trees[t].leaf_counts[oracle::route(f.trees[t], b.X.row(i))];
      const double tot = static_cast<double>(lc[0] + lc[1]);
      for (int k = 0; k < 2; ++k) share[k] += lc[k] / tot;
      ++voters;
    }
    ASSERT_GT(voters, 0);
    const int expect = share[1] > share[0] ? 1 : 0;
    EXPECT_EQ(oob.labels[i], expect);
    EXPECT_NEAR(oob.vote_shares(i, 0), share[0] / voters, 1e-12);
    correct += oob.labels[i] == b.y[i];
  }
  EXPECT_GT(correct / 300.0, 0.9);
}

TEST(Forest, PredictProbaRowsSumToOne) {
  const auto b = blobs(90, 3, 2.0, 9);
  ForestParams p;
  p.n_trees = 7;
  const auto f = fit_forest(b.X, b.y, 3, p);
  const auto proba = predict_proba(f, b.X);
  for (Eigen::Index i = 0; i < proba.rows(); ++i) EXPECT_NEAR(proba.row(i).sum(), 1.0, 1e-12);
}

TEST(GridSearch, SingleCandidateIsReturned) {
  const auto b = blobs(60, 2, 3.0, 10);
  const auto grid = make_forest_grid({10}, {2}, {1});
  const auto r = grid_search(b.X, b.y, 2, grid, 3);
  EXPECT_EQ(r.best, grid[0]);
  EXPECT_EQ(r.best_index, 0u);
  EXPECT_TRUE(std::isfinite(r.mean_scores[0]));
}

TEST(GridSearch, InvalidCandidateRaises) {
  const auto b = blobs(60, 2, 3.0, 10);
  EXPECT_THROW(grid_search(b.X, b.y, 2, make_forest_grid({0}, {2}, {1}), 3), PreconditionError);
  EXPECT_THROW(grid_search(b.X, b.y, 2, {}, 3), PreconditionError);
}

TEST(GridSearch, ScoresEqualIndependentCrossValidation) {
  const auto b = blobs(90, 2, 1.0, 11);
  const auto grid = make_forest_grid({5, 15}, {2}, {1, 10});
  const int k = 3;
  const auto r = grid_search(b.X, b.y, 2, grid, k, 21);
  const auto fold = stratified_folds(b.y, 2, k, 21);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double sum = 0.0;
    for (int f = 0; f < k; ++f) {
      std::vector<int> fit, held;
      for (int i = 0; i < 90; ++i) (fold[i] == f ? held : fit).push_back(i);
      const auto forest = fit_forest(gather_rows(b.X, fit), gather(b.y, fit), 2, grid[g]);
      std::vector<int> pred;
      for (int i : held) {
        Eigen::RowVectorXd votes = Eigen::RowVectorXd::Zero(2);
        for (const auto& tree : forest.trees) {
          const auto& lc = tree.leaf_counts[oracle::route(tree, b.X.row(i))];
          votes(0) += lc[0] / static_cast<double>(lc[0] + lc[1]);
          votes(1) += lc[1] / static_cast<double>(lc[0] + lc[1]);
        }
        pred.push_back(votes(1) > votes(0) ? 1 : 0);
      }
      sum += oracle::weighted_f1(gather(b.y, held), pred, 2);
    }
    EXPECT_NEAR(r.mean_scores[g], sum / k, 1e-12);
  }
  const auto best = std::ranges::max_element(r.mean_scores) - r.mean_scores.begin();
  EXPECT_EQ(r.best_index, static_cast<std::size_t>(best));
}

TEST(GridSearch, DefaultGridHasPaperAxes) {
  EXPECT_EQ(default_forest_grid().size(), 6u * 3u * 9u);
}

TEST(ForestJson, RoundTripPreservesPredictions) {
  const auto b = blobs(100, 3, 2.0, 12);
  ForestParams p;
  p.n_trees = 9;
  p.min_samples_leaf = 3;
  const auto f = fit_forest(b.X, b.y, 3, p);
  testutil::TempDir dir("forest");
  save_forest(f, dir / "f.json");
  const auto g = load_forest(dir / "f.json");
  EXPECT_EQ(g.params, f.params);
  EXPECT_EQ(g.inbag, f.inbag);
  EXPECT_EQ(apply(g, b.X), apply(f, b.X));
  EXPECT_EQ(predict_proba(g, b.X), predict_proba(f, b.X));
  EXPECT_EQ(g.class_frequencies, f.class_frequencies);

  auto j = to_json(f);
  j["version"] = 99;
  EXPECT_THROW(forest_from_json(j), DataError);
}
