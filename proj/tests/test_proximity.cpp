#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rfgnn/graph_build.hpp"
#include "rfgnn/proximity.hpp"
#include "rfgnn/synthetic.hpp"
#include "test_util.hpp"

using namespace rfgnn;

namespace {

// Forest shell with a given in-bag matrix; proximities only read the
// multiplicities and tree count.
RandomForest shell(const InbagCounts& inbag) {
  RandomForest f;
  f.trees.resize(inbag.rows());
  f.inbag = inbag;
  f.n_train = static_cast<int>(inbag.cols());
  f.n_classes = 2;
  return f;
}

std::vector<int> first_n(int n) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

struct Fitted {
  Eigen::MatrixXd X;
  std::vector<int> y;
  std::vector<int> train;
  RandomForest forest;
  LeafIndexMatrix leaves;
};

// Forest on the first n_train rows of a blobs dataset, applied to all rows.
Fitted fitted(int n, int n_train, int trees, std::uint64_t seed, int classes = 2) {
  BlobSpec spec;
  spec.n_rows = n;
  spec.n_classes = classes;
  spec.separation = 1.5;
  spec.seed = seed;
  const auto ds = make_blobs(spec);
  Fitted f;
  f.X = testutil::as_matrix(ds);
  f.y = ds.labels;
  f.train = first_n(n_train);
  ForestParams p;
  p.n_trees = trees;
  p.seed = seed;
  f.forest = fit_forest(f.X.topRows(n_train), gather(f.y, f.train), classes, p);
  f.leaves = apply(f.forest, f.X);
  return f;
}

}  // namespace

TEST(OriginalProximity, ShareOfTreesWithCommonLeaf) {
  LeafIndexMatrix leaves(2, 3);
  leaves << 0, 1, 2,  //
      0, 0, 2;
  const auto P = original_proximity(leaves);
  EXPECT_EQ(P(0, 1), 2.0 / 3.0);
  EXPECT_EQ(P(0, 0), 1.0);
  EXPECT_TRUE(P.symmetric);
}

TEST(OobProximity, CountsOnlyJointlyOutOfBagTrees) {
  // Both rows OOB in trees 0 and 2; same leaf only in tree 2.
  InbagCounts inbag(3, 3);
  inbag << 0, 0, 3,  //
      1, 1, 1,       //
      0, 0, 3;
  LeafIndexMatrix leaves(3, 3);
  leaves << 0, 0, 0,  //
      1, 0, 0,        //
      0, 1, 0;
  const auto P = oob_proximity(shell(inbag), leaves, first_n(3));
  EXPECT_EQ(P(0, 1), 0.5);
  EXPECT_EQ(P(1, 0), 0.5);
  EXPECT_EQ(P(0, 2), 0.0);  // never jointly OOB
}

TEST(RfgapProximity, MultiplicityOverLeafMass) {
  InbagCounts inbag(1, 4);
  inbag << 2, 1, 1, 0;
  const LeafIndexMatrix leaves = LeafIndexMatrix::Zero(4, 1);
  const auto P = rfgap_proximity(shell(inbag), leaves, first_n(4));
  EXPECT_EQ(P(3, 0), 0.5);
  EXPECT_EQ(P(3, 1), 0.25);
  EXPECT_EQ(P(3, 2), 0.25);
  EXPECT_EQ(P(3, 3), 0.0);
  // rows 0..2 are in-bag in the only tree: no OOB trees, empty row
  for (int i = 0; i < 3; ++i) EXPECT_EQ(P.to_dense().row(i).sum(), 0.0);
}

TEST(RfgapProximity, RowsSumToOne) {
  const auto f = fitted(120, 90, 40, 2);
  const auto P = rfgap_proximity(f.forest, f.leaves, f.train).to_dense();
  for (int i = 0; i < 120; ++i) {
    const bool has_oob = i >= 90 || !f.forest.oob_trees(i).empty();
    if (has_oob) EXPECT_NEAR(P.row(i).sum(), 1.0, 1e-9) << "row " << i;
  }
}

TEST(RfgapProximity, ReproducesOutOfBagVotes) {
  const auto f = fitted(150, 150, 80, 3, 3);
  const auto P = rfgap_proximity(f.forest, f.leaves, f.train).to_dense();
  const auto oob = oob_predict(f.forest, f.X);
  for (int i = 0; i < 150; ++i) {
    if (f.forest.oob_trees(i).empty()) continue;
    Eigen::RowVectorXd votes = Eigen::RowVectorXd::Zero(3);
    for (int j = 0; j < 150; ++j) votes(f.y[j]) += P(i, j);
    EXPECT_NEAR((votes - oob.vote_shares.row(i)).cwiseAbs().maxCoeff(), 0.0, 1e-12);
  }
}

TEST(Proximities, MatchBruteForceOnRandomForests) {
  Rng rng(99);
  for (int trial = 0; trial < 15; ++trial) {
    const int n = 6 + static_cast<int>(rng.index(7));
    const int n_train = n - static_cast<int>(rng.index(3));
    const auto f = fitted(n, n_train, 1 + static_cast<int>(rng.index(5)), 1000 + trial);
    EXPECT_EQ(original_proximity(f.leaves).dense, oracle::original(f.leaves));
    EXPECT_EQ(oob_proximity(f.forest, f.leaves, f.train).dense, oracle::oob(f.forest, f.leaves, f.train));
    const auto gap = rfgap_proximity(f.forest, f.leaves, f.train).dense;
    EXPECT_LE((gap - oracle::rfgap(f.forest, f.leaves, f.train)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Proximities, SparseAndDenseAgree) {
  const auto f = fitted(80, 60, 25, 4);
  for (auto kind : {MeasureKind::original, MeasureKind::oob, MeasureKind::rfgap}) {
    const auto d = graph_proximity(kind, f.forest, f.leaves, f.train, Storage::dense);
    const auto s = graph_proximity(kind, f.forest, f.leaves, f.train, Storage::sparse);
    ASSERT_FALSE(d.is_sparse);
    ASSERT_TRUE(s.is_sparse);
    EXPECT_LE((d.dense - s.to_dense()).cwiseAbs().maxCoeff(), 1e-12) << to_string(kind);
  }
}

TEST(Proximities, TrainRowsMustMatchForest) {
  const auto f = fitted(30, 20, 3, 5);
  EXPECT_THROW(oob_proximity(f.forest, f.leaves, first_n(19)), PreconditionError);
  EXPECT_THROW(graph_proximity(MeasureKind::cosine, f.forest, f.leaves, f.train), PreconditionError);
}

TEST(ExtendTestTest, DiffusionProduct) {
  Eigen::MatrixXd a(1, 2);
  a << 0.5, 0.5;
  EXPECT_EQ(extend_test_test(a, a.transpose())(0, 0), 0.5);

  Eigen::MatrixXd b(2, 2);
  b << 1, 1,  //
      1, 0;
  // product [[2,1],[1,1]] exceeds 1 and is divided by its peak
  Eigen::MatrixXd expect(2, 2);
  expect << 1, 0.5,  //
      0.5, 0.5;
  EXPECT_EQ(extend_test_test(b, b.transpose()), expect);

  Eigen::MatrixXd c(2, 2);
  c << 0.5, 0,  //
      0, 0.25;
  Eigen::MatrixXd small(2, 2);
  small << 0.25, 0,  //
      0, 0.0625;
  EXPECT_EQ(extend_test_test(c, c.transpose()), small);  // peak <= 1: unchanged
  EXPECT_THROW(extend_test_test(a, a), PreconditionError);
}

TEST(ExtendTestTest, SparseMatchesDense) {
  Eigen::MatrixXd a(3, 4);
  a << 0.5, 0.5, 0, 0,  //
      1, 1, 0, 1,       //
      0, 0, 0.3, 0;
  const SparseRowMatrix s = a.sparseView();
  const SparseRowMatrix st = a.transpose().sparseView();
  EXPECT_LE((Eigen::MatrixXd(extend_test_test(s, st)) - extend_test_test(a, a.transpose())).cwiseAbs().maxCoeff(),
            1e-15);
}

TEST(Symmetrize, AveragesWithTranspose) {
  ProximityMatrix P;
  P.dense.resize(2, 2);
  P.dense << 0, 1,  //
      0, 0;
  const auto S = symmetrize(P);
  EXPECT_EQ(S(0, 1), 0.5);
  EXPECT_EQ(S(1, 0), 0.5);
  EXPECT_TRUE(S.symmetric);
  P.dense << 1, 0.4,  //
      0.4, 1;
  EXPECT_EQ(symmetrize(P).dense, P.dense);
}

TEST(CompleteRfgap, SymmetricBoundedAndFilled) {
  const auto f = fitted(100, 70, 30, 6);
  const auto raw = rfgap_proximity(f.forest, f.leaves, f.train);
  const auto P = complete_rfgap(raw, f.train);
  EXPECT_TRUE(is_symmetric(P));
  const auto D = P.to_dense();
  EXPECT_GE(D.minCoeff(), 0.0);
  EXPECT_LE(D.maxCoeff(), 1.0);
  for (int i = 70; i < 100; ++i) EXPECT_EQ(D(i, i), 0.0);
  // test rows are connected to each other through shared training neighbours
  EXPECT_GT(D.bottomRightCorner(30, 30).sum(), 0.0);
  // the train->test block mirrors test->train
  EXPECT_EQ(D(75, 3), raw(75, 3));
  EXPECT_EQ(D(3, 75), raw(75, 3));
}

TEST(Triples, RoundTripReproducesEdges) {
  const auto f = fitted(60, 45, 20, 7);
  for (auto kind : {MeasureKind::original, MeasureKind::oob, MeasureKind::rfgap}) {
    const auto P = graph_proximity(kind, f.forest, f.leaves, f.train);
    std::stringstream ss;
    write_triples(P, ss);
    const auto Q = read_triples(ss);
    EXPECT_EQ(Q.kind, kind);
    EXPECT_EQ(Q.to_dense(), P.to_dense());
    for (double alpha : {0.1, 0.35, 0.8}) {
      EXPECT_EQ(threshold_adjacency(Q, alpha).edges, threshold_adjacency(P, alpha).edges);
    }
  }
  std::stringstream bad("N 3 original\n");
  EXPECT_THROW(read_triples(bad), DataError);
}

TEST(MatrixText, HeaderAndRows) {
  LeafIndexMatrix leaves(2, 2);
  leaves << 0, 0,  //
      0, 1;
  std::ostringstream out;
  write_matrix_text(original_proximity(leaves), out);
  EXPECT_EQ(out.str(), "2 original\n1 0.5\n0.5 1\n");
}
