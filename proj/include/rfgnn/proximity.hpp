#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "rfgnn/error.hpp"
#include "rfgnn/forest.hpp"

namespace rfgnn {

/// Tag for the measure that produced a similarity matrix.
enum class MeasureKind { original, oob, rfgap, cosine, jaccard, rbf };

inline std::string to_string(MeasureKind k) {
  switch (k) {
    case MeasureKind::original: return "original";
    case MeasureKind::oob: return "oob";
    case MeasureKind::rfgap: return "rfgap";
    case MeasureKind::cosine: return "cosine";
    case MeasureKind::jaccard: return "jaccard";
    case MeasureKind::rbf: return "rbf";
  }
  return "unknown";
}

inline MeasureKind measure_from_string(const std::string& s) {
  for (auto k : {MeasureKind::original, MeasureKind::oob, MeasureKind::rfgap, MeasureKind::cosine,
                 MeasureKind::jaccard, MeasureKind::rbf}) {
    if (to_string(k) == s) return k;
  }
  throw PreconditionError("unknown proximity/similarity kind '" + s + "'");
}

inline bool is_forest_measure(MeasureKind k) {
  return k == MeasureKind::original || k == MeasureKind::oob || k == MeasureKind::rfgap;
}

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

enum class Storage { automatic, dense, sparse };

/// Matrices larger than this are accumulated sparsely under Storage::automatic.
inline constexpr Eigen::Index kDenseLimit = 20000;
/// Entries below this are dropped from sparse storage.
inline constexpr double kSparseDrop = 1e-12;

/// Square similarity matrix over dataset rows, either dense or sparse.
struct ProximityMatrix {
  MeasureKind kind = MeasureKind::original;
  std::vector<int> row_index_map;  // dataset row id of each matrix row
  bool symmetric = false;
  bool is_sparse = false;
  Eigen::MatrixXd dense;
  SparseRowMatrix sparse;

  Eigen::Index size() const { return is_sparse ? sparse.rows() : dense.rows(); }

  double operator()(Eigen::Index i, Eigen::Index j) const { return is_sparse ? sparse.coeff(i, j) : dense(i, j); }

  Eigen::MatrixXd to_dense() const { return is_sparse ? Eigen::MatrixXd(sparse) : dense; }
};

inline bool use_sparse(Storage s, Eigen::Index n) {
  return s == Storage::sparse || (s == Storage::automatic && n > kDenseLimit);
}

namespace detail {

// Builds a matrix row by row. `fill(i, row)` writes row i into a zeroed
// scratch vector and returns the columns it touched.
template <typename Fill>
ProximityMatrix assemble_rows(Eigen::Index n, MeasureKind kind, Storage storage, Fill&& fill) {
  ProximityMatrix P;
  P.kind = kind;
  P.is_sparse = use_sparse(storage, n);
  P.row_index_map.resize(n);
  std::iota(P.row_index_map.begin(), P.row_index_map.end(), 0);
  std::vector<double> scratch(n, 0.0);
  std::vector<int> touched;
  if (P.is_sparse) {
    std::vector<Eigen::Triplet<double>> triplets;
    for (Eigen::Index i = 0; i < n; ++i) {
      touched.clear();
      fill(i, scratch, touched);
      std::ranges::sort(touched);
      touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
      for (int j : touched) {
        if (scratch[j] >= kSparseDrop) triplets.emplace_back(static_cast<int>(i), j, scratch[j]);
        scratch[j] = 0.0;
      }
    }
    P.sparse.resize(n, n);
    P.sparse.setFromTriplets(triplets.begin(), triplets.end());
  } else {
    P.dense = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      touched.clear();
      fill(i, scratch, touched);
      for (int j : touched) {
        P.dense(i, j) = scratch[j];
      }
      for (int j : touched) scratch[j] = 0.0;
    }
  }
  return P;
}

// members[t][leaf] -> matrix rows in that leaf, ascending.
inline std::vector<std::vector<std::vector<int>>> leaf_members(const LeafIndexMatrix& leaves,
                                                               const std::vector<int>& n_leaves,
                                                               const std::vector<char>* include = nullptr,
                                                               int tree_filter = -1) {
  std::vector<std::vector<std::vector<int>>> members(leaves.cols());
  for (Eigen::Index t = 0; t < leaves.cols(); ++t) {
    if (tree_filter >= 0 && t != tree_filter) continue;
    members[t].resize(n_leaves[t]);
    for (Eigen::Index i = 0; i < leaves.rows(); ++i) {
      if (include && !(*include)[i]) continue;
      members[t][leaves(i, t)].push_back(static_cast<int>(i));
    }
  }
  return members;
}

inline std::vector<int> leaves_per_tree(const LeafIndexMatrix& leaves) {
  std::vector<int> n(leaves.cols(), 0);
  for (Eigen::Index t = 0; t < leaves.cols(); ++t) {
    for (Eigen::Index i = 0; i < leaves.rows(); ++i) n[t] = std::max(n[t], leaves(i, t) + 1);
  }
  return n;
}

// Position of each matrix row in the forest's training order, or -1.
inline std::vector<int> training_positions(Eigen::Index n, const std::vector<int>& train_rows) {
  std::vector<int> pos(n, -1);
  for (std::size_t p = 0; p < train_rows.size(); ++p) {
    if (train_rows[p] < 0 || train_rows[p] >= n) throw PreconditionError("train_rows index out of range");
    pos[train_rows[p]] = static_cast<int>(p);
  }
  return pos;
}

// Bootstrap multiplicity of matrix row i in tree t; rows outside training are
// never in-bag.
inline int multiplicity(const RandomForest& forest, const std::vector<int>& pos, Eigen::Index i, int t) {
  return pos[i] < 0 ? 0 : forest.inbag(t, pos[i]);
}

inline void check_forest_inputs(const RandomForest& forest, const LeafIndexMatrix& leaves,
                                const std::vector<int>& train_rows) {
  if (leaves.cols() != forest.n_trees()) throw PreconditionError("leaf matrix has wrong tree count");
  if (static_cast<int>(train_rows.size()) != forest.n_train) {
    throw PreconditionError("train_rows size differs from the forest's training size");
  }
}

}  // namespace detail

/// Share of trees in which rows i and j land in the same leaf.
inline ProximityMatrix original_proximity(const LeafIndexMatrix& leaves, Storage storage = Storage::automatic) {
  const int T = static_cast<int>(leaves.cols());
  if (T < 1) throw PreconditionError("original_proximity: need at least one tree");
  const auto members = detail::leaf_members(leaves, detail::leaves_per_tree(leaves));
  auto P = detail::assemble_rows(leaves.rows(), MeasureKind::original, storage,
                                 [&](Eigen::Index i, std::vector<double>& row, std::vector<int>& touched) {
                                   for (int t = 0; t < T; ++t) {
                                     for (int j : members[t][leaves(i, t)]) {
                                       if (row[j] == 0.0) touched.push_back(j);
                                       row[j] += 1.0;
                                     }
                                   }
                                   for (int j : touched) row[j] /= T;
                                 });
  P.symmetric = true;
  return P;
}

/// Among trees where both rows are out-of-bag, the share in which they share
/// a leaf; 0 when they are never out-of-bag together. Rows not in
/// `train_rows` count as out-of-bag in every tree.
inline ProximityMatrix oob_proximity(const RandomForest& forest, const LeafIndexMatrix& leaves,
                                     const std::vector<int>& train_rows, Storage storage = Storage::automatic) {
  detail::check_forest_inputs(forest, leaves, train_rows);
  const Eigen::Index n = leaves.rows();
  const int T = forest.n_trees();
  const auto pos = detail::training_positions(n, train_rows);

  // oob(i, t) as a 0/1 matrix so joint-OOB counts are row dot products.
  Eigen::MatrixXd oob(n, T);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int t = 0; t < T; ++t) oob(i, t) = detail::multiplicity(forest, pos, i, t) == 0 ? 1.0 : 0.0;
  }
  const auto n_leaves = detail::leaves_per_tree(leaves);
  std::vector<std::vector<std::vector<int>>> members(T);
  for (int t = 0; t < T; ++t) {
    members[t].resize(n_leaves[t]);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (oob(i, t) != 0.0) members[t][leaves(i, t)].push_back(static_cast<int>(i));
    }
  }

  auto P = detail::assemble_rows(n, MeasureKind::oob, storage,
                                 [&](Eigen::Index i, std::vector<double>& row, std::vector<int>& touched) {
                                   for (int t = 0; t < T; ++t) {
                                     if (oob(i, t) == 0.0) continue;
                                     for (int j : members[t][leaves(i, t)]) {
                                       if (row[j] == 0.0) touched.push_back(j);
                                       row[j] += 1.0;
                                     }
                                   }
                                   for (int j : touched) row[j] /= oob.row(i).dot(oob.row(j));
                                 });
  P.symmetric = true;
  return P;
}

/// Proximity weighted by in-bag multiplicity over the in-bag mass of the
/// shared leaf, averaged over the trees where row i is out-of-bag. Rows not
/// in `train_rows` average over all trees. The result is not symmetric, and
/// columns of rows outside training are zero.
inline ProximityMatrix rfgap_proximity(const RandomForest& forest, const LeafIndexMatrix& leaves,
                                       const std::vector<int>& train_rows, Storage storage = Storage::automatic) {
  detail::check_forest_inputs(forest, leaves, train_rows);
  const Eigen::Index n = leaves.rows();
  const int T = forest.n_trees();
  const auto pos = detail::training_positions(n, train_rows);
  const auto n_leaves = detail::leaves_per_tree(leaves);

  // In-bag members and in-bag mass |M| of every leaf.
  std::vector<std::vector<std::vector<int>>> inbag_members(T);
  std::vector<std::vector<double>> mass(T);
  for (int t = 0; t < T; ++t) {
    inbag_members[t].resize(n_leaves[t]);
    mass[t].assign(n_leaves[t], 0.0);
    for (int j : train_rows) {
      const int c = forest.inbag(t, pos[j]);
      if (c == 0) continue;
      inbag_members[t][leaves(j, t)].push_back(j);
      mass[t][leaves(j, t)] += c;
    }
    for (auto& m : inbag_members[t]) std::ranges::sort(m);
  }

  return detail::assemble_rows(n, MeasureKind::rfgap, storage,
                               [&](Eigen::Index i, std::vector<double>& row, std::vector<int>& touched) {
                                 int voters = 0;
                                 for (int t = 0; t < T; ++t) {
                                   if (detail::multiplicity(forest, pos, i, t) != 0) continue;
                                   ++voters;
                                   const int leaf = leaves(i, t);
                                   for (int j : inbag_members[t][leaf]) {
                                     if (row[j] == 0.0) touched.push_back(j);
                                     row[j] += forest.inbag(t, pos[j]) / mass[t][leaf];
                                   }
                                 }
                                 if (voters == 0) {
                                   for (int j : touched) row[j] = 0.0;
                                   touched.clear();
                                   return;
                                 }
                                 for (int j : touched) row[j] /= voters;
                               });
}

/// Diffusion of test-train similarities into a test-test block:
/// test_train * train_test, divided by its largest entry when that exceeds 1.
inline Eigen::MatrixXd extend_test_test(const Eigen::MatrixXd& test_train, const Eigen::MatrixXd& train_test) {
  if (test_train.cols() != train_test.rows() || test_train.rows() != train_test.cols()) {
    throw PreconditionError("extend_test_test: block shapes do not conform");
  }
  Eigen::MatrixXd block = test_train * train_test;
  const double peak = block.size() > 0 ? block.maxCoeff() : 0.0;
  if (peak > 1.0) block /= peak;
  return block.cwiseMax(0.0).cwiseMin(1.0);
}

inline SparseRowMatrix extend_test_test(const SparseRowMatrix& test_train, const SparseRowMatrix& train_test) {
  if (test_train.cols() != train_test.rows() || test_train.rows() != train_test.cols()) {
    throw PreconditionError("extend_test_test: block shapes do not conform");
  }
  SparseRowMatrix block = (test_train * train_test).pruned(kSparseDrop);
  double peak = 0.0;
  for (Eigen::Index k = 0; k < block.outerSize(); ++k) {
    for (SparseRowMatrix::InnerIterator it(block, k); it; ++it) peak = std::max(peak, it.value());
  }
  if (peak > 1.0) block /= peak;
  return block;
}

/// (P + P^T) / 2.
inline ProximityMatrix symmetrize(const ProximityMatrix& P) {
  ProximityMatrix out = P;
  if (P.is_sparse) {
    if (P.sparse.rows() != P.sparse.cols()) throw PreconditionError("symmetrize: matrix is not square");
    SparseRowMatrix transposed = P.sparse.transpose();
    out.sparse = (P.sparse + transposed) * 0.5;
  } else {
    if (P.dense.rows() != P.dense.cols()) throw PreconditionError("symmetrize: matrix is not square");
    out.dense = (P.dense + P.dense.transpose()) * 0.5;
  }
  out.symmetric = true;
  return out;
}

/// Completes a raw RF-GAP matrix for graph use: the train->test block is the
/// transpose of the test->train block, the test-test block is their
/// diffusion product (diagonal zeroed), and the whole is symmetrized.
inline ProximityMatrix complete_rfgap(const ProximityMatrix& raw, const std::vector<int>& train_rows) {
  const Eigen::Index n = raw.size();
  const auto pos = detail::training_positions(n, train_rows);
  std::vector<int> test_rows;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (pos[i] < 0) test_rows.push_back(static_cast<int>(i));
  }
  const Eigen::Index nt = static_cast<Eigen::Index>(test_rows.size());
  const Eigen::Index nr = static_cast<Eigen::Index>(train_rows.size());

  ProximityMatrix out = raw;
  if (raw.is_sparse) {
    std::vector<Eigen::Triplet<double>> cross;
    std::vector<Eigen::Triplet<double>> full;
    std::vector<int> test_pos(n, -1);
    for (Eigen::Index a = 0; a < nt; ++a) test_pos[test_rows[a]] = static_cast<int>(a);
    for (Eigen::Index k = 0; k < raw.sparse.outerSize(); ++k) {
      for (SparseRowMatrix::InnerIterator it(raw.sparse, k); it; ++it) {
        const auto i = it.row(), j = it.col();
        if (pos[j] < 0) continue;  // columns outside training are zero by construction
        full.emplace_back(static_cast<int>(i), static_cast<int>(j), it.value());
        if (pos[i] < 0) {
          cross.emplace_back(test_pos[i], pos[j], it.value());
          full.emplace_back(static_cast<int>(j), static_cast<int>(i), it.value());
        }
      }
    }
    SparseRowMatrix test_train(nt, nr);
    test_train.setFromTriplets(cross.begin(), cross.end());
    SparseRowMatrix train_test = test_train.transpose();
    const SparseRowMatrix tt = extend_test_test(test_train, train_test);
    for (Eigen::Index k = 0; k < tt.outerSize(); ++k) {
      for (SparseRowMatrix::InnerIterator it(tt, k); it; ++it) {
        if (it.row() == it.col()) continue;
        full.emplace_back(test_rows[it.row()], test_rows[it.col()], it.value());
      }
    }
    out.sparse.setZero();
    out.sparse.resize(n, n);
    out.sparse.setFromTriplets(full.begin(), full.end());
  } else {
    Eigen::MatrixXd test_train(nt, nr);
    for (Eigen::Index a = 0; a < nt; ++a) {
      for (Eigen::Index p = 0; p < nr; ++p) test_train(a, p) = raw.dense(test_rows[a], train_rows[p]);
    }
    Eigen::MatrixXd tt = extend_test_test(test_train, test_train.transpose());
    tt.diagonal().setZero();
    for (Eigen::Index a = 0; a < nt; ++a) {
      for (Eigen::Index p = 0; p < nr; ++p) out.dense(train_rows[p], test_rows[a]) = test_train(a, p);
      for (Eigen::Index b = 0; b < nt; ++b) out.dense(test_rows[a], test_rows[b]) = tt(a, b);
    }
  }
  return symmetrize(out);
}

/// The undirected matrix used to build graphs for one forest measure.
inline ProximityMatrix graph_proximity(MeasureKind kind, const RandomForest& forest, const LeafIndexMatrix& leaves,
                                       const std::vector<int>& train_rows, Storage storage = Storage::automatic) {
  switch (kind) {
    case MeasureKind::original: return original_proximity(leaves, storage);
    case MeasureKind::oob: return symmetrize(oob_proximity(forest, leaves, train_rows, storage));
    case MeasureKind::rfgap: return complete_rfgap(rfgap_proximity(forest, leaves, train_rows, storage), train_rows);
    default: throw PreconditionError("graph_proximity: " + to_string(kind) + " is not a forest measure");
  }
}

// Export ------------------------------------------------------------------

namespace detail {
inline std::string exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

/// Row-major text matrix with header line "N kind".
inline void write_matrix_text(const ProximityMatrix& P, std::ostream& out) {
  const auto dense = P.to_dense();
  out << dense.rows() << ' ' << to_string(P.kind) << '\n';
  for (Eigen::Index i = 0; i < dense.rows(); ++i) {
    for (Eigen::Index j = 0; j < dense.cols(); ++j) {
      if (j) out << ' ';
      out << detail::exact(dense(i, j));
    }
    out << '\n';
  }
}

/// Nonzero entries as "i j value" lines after a "# N kind" header.
inline void write_triples(const ProximityMatrix& P, std::ostream& out) {
  out << "# " << P.size() << ' ' << to_string(P.kind) << '\n';
  if (P.is_sparse) {
    for (Eigen::Index k = 0; k < P.sparse.outerSize(); ++k) {
      for (SparseRowMatrix::InnerIterator it(P.sparse, k); it; ++it) {
        out << it.row() << ' ' << it.col() << ' ' << detail::exact(it.value()) << '\n';
      }
    }
    return;
  }
  for (Eigen::Index i = 0; i < P.dense.rows(); ++i) {
    for (Eigen::Index j = 0; j < P.dense.cols(); ++j) {
      if (P.dense(i, j) != 0.0) out << i << ' ' << j << ' ' << detail::exact(P.dense(i, j)) << '\n';
    }
  }
}

inline ProximityMatrix read_triples(std::istream& in) {
  std::string hash, kind;
  Eigen::Index n = 0;
  if (!(in >> hash >> n >> kind) || hash != "#") throw DataError("triple file: bad header");
  std::vector<Eigen::Triplet<double>> triplets;
  long long i, j;
  double v;
  while (in >> i >> j >> v) {
    if (i < 0 || j < 0 || i >= n || j >= n) throw DataError("triple file: index out of range");
    triplets.emplace_back(static_cast<int>(i), static_cast<int>(j), v);
  }
  if (!in.eof()) throw DataError("triple file: malformed line");
  ProximityMatrix P;
  P.kind = measure_from_string(kind);
  P.is_sparse = true;
  P.sparse.resize(n, n);
  P.sparse.setFromTriplets(triplets.begin(), triplets.end());
  P.row_index_map.resize(n);
  std::iota(P.row_index_map.begin(), P.row_index_map.end(), 0);
  SparseRowMatrix transposed = P.sparse.transpose();
  P.symmetric = (P.sparse - transposed).norm() == 0.0;
  return P;
}

}  // namespace rfgnn
