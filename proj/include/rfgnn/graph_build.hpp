#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "rfgnn/error.hpp"
#include "rfgnn/proximity.hpp"

namespace rfgnn {

/// Unweighted undirected graph obtained by thresholding a similarity matrix.
struct Adjacency {
  int n_nodes = 0;
  double alpha = 0.0;
  MeasureKind source_kind = MeasureKind::original;
  std::vector<std::pair<int, int>> edges;  // i < j, sorted
  std::vector<std::vector<int>> neighbors;  // ascending per node

  std::size_t edge_count() const { return edges.size(); }
};

inline Adjacency make_adjacency(int n, std::vector<std::pair<int, int>> edges, double alpha, MeasureKind kind) {
  Adjacency a;
  a.n_nodes = n;
  a.alpha = alpha;
  a.source_kind = kind;
  std::ranges::sort(edges);
  a.neighbors.assign(n, {});
  for (auto [i, j] : edges) {
    a.neighbors[i].push_back(j);
    a.neighbors[j].push_back(i);
  }
  for (auto& nb : a.neighbors) std::ranges::sort(nb);
  a.edges = std::move(edges);
  return a;
}

inline bool is_symmetric(const ProximityMatrix& P) {
  if (P.is_sparse) {
    SparseRowMatrix transposed = P.sparse.transpose();
    return P.sparse.rows() == P.sparse.cols() && (P.sparse - transposed).norm() == 0.0;
  }
  if (P.dense.rows() != P.dense.cols()) return false;
  for (Eigen::Index i = 0; i < P.dense.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < P.dense.cols(); ++j) {
      if (P.dense(i, j) != P.dense(j, i)) return false;
    }
  }
  return true;
}

/// Edge (i, j), i != j, iff P(i, j) >= alpha. The diagonal never produces
/// self-loops.
inline Adjacency threshold_adjacency(const ProximityMatrix& P, double alpha) {
  if (!(alpha >= 0.0)) throw PreconditionError("threshold_adjacency: alpha must be >= 0");
  if (!is_symmetric(P)) throw PreconditionError("threshold_adjacency: similarity matrix is not symmetric");
  const int n = static_cast<int>(P.size());
  std::vector<std::pair<int, int>> edges;
  if (P.is_sparse && alpha > 0.0) {
    for (Eigen::Index k = 0; k < P.sparse.outerSize(); ++k) {
      for (SparseRowMatrix::InnerIterator it(P.sparse, k); it; ++it) {
        if (it.row() < it.col() && it.value() >= alpha) {
          edges.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()));
        }
      }
    }
  } else if (P.is_sparse) {
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) edges.emplace_back(i, j);
    }
  } else {
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (P.dense(i, j) >= alpha) edges.emplace_back(i, j);
      }
    }
  }
  return make_adjacency(n, std::move(edges), alpha, P.kind);
}

namespace detail {
inline ProximityMatrix dense_similarity(Eigen::MatrixXd values, MeasureKind kind) {
  ProximityMatrix S;
  S.kind = kind;
  S.dense = std::move(values);
  S.symmetric = true;
  S.row_index_map.resize(S.dense.rows());
  std::iota(S.row_index_map.begin(), S.row_index_map.end(), 0);
  return S;
}
}  // namespace detail

/// Cosine similarity; rows of zero norm get similarity 0 with every row.
inline ProximityMatrix cosine_matrix(const Eigen::MatrixXd& X) {
  const Eigen::Index n = X.rows();
  const Eigen::VectorXd norms = X.rowwise().norm();
  const Eigen::MatrixXd gram = X * X.transpose();
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (norms(i) == 0.0) continue;
    for (Eigen::Index j = i; j < n; ++j) {
      if (norms(j) == 0.0) continue;
      const double v = i == j ? 1.0 : std::clamp(gram(i, j) / (norms(i) * norms(j)), -1.0, 1.0);
      S(i, j) = S(j, i) = v;
    }
  }
  return detail::dense_similarity(std::move(S), MeasureKind::cosine);
}

/// Weighted Jaccard: sum of elementwise minima over sum of maxima. Two
/// all-zero rows are identical and score 1.
inline ProximityMatrix jaccard_matrix(const Eigen::MatrixXd& X) {
  if (X.size() > 0 && X.minCoeff() < 0.0) throw PreconditionError("jaccard_matrix: features must be nonnegative");
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd S(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const double lo = X.row(i).cwiseMin(X.row(j)).sum();
      const double hi = X.row(i).cwiseMax(X.row(j)).sum();
      S(i, j) = S(j, i) = hi == 0.0 ? 1.0 : lo / hi;
    }
  }
  return detail::dense_similarity(std::move(S), MeasureKind::jaccard);
}

/// exp(-gamma * ||x_i - x_j||^2), without rescaling.
inline Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& X, double gamma) {
  if (!(gamma > 0.0)) throw PreconditionError("rbf: gamma must be positive");
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    K(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      K(i, j) = K(j, i) = std::exp(-gamma * (X.row(i) - X.row(j)).squaredNorm());
    }
  }
  return K;
}

inline constexpr double kDefaultRbfGamma = 0.01;

/// RBF kernel min-max rescaled to [0, 1] over the off-diagonal entries
/// (left as-is when those are constant). The diagonal stays 1.
inline ProximityMatrix rbf_matrix(const Eigen::MatrixXd& X, double gamma = kDefaultRbfGamma) {
  Eigen::MatrixXd K = rbf_kernel(X, gamma);
  const Eigen::Index n = K.rows();
  if (n > 1) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        lo = std::min(lo, K(i, j));
        hi = std::max(hi, K(i, j));
      }
    }
    if (hi > lo) {
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) K(i, j) = K(j, i) = (K(i, j) - lo) / (hi - lo);
      }
    }
  }
  return detail::dense_similarity(std::move(K), MeasureKind::rbf);
}

/// Per-column shift and scale onto [0, 1]; constant columns become 0.
inline Eigen::MatrixXd minmax_columns(const Eigen::MatrixXd& X) {
  Eigen::MatrixXd out(X.rows(), X.cols());
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    const double lo = X.col(c).minCoeff(), hi = X.col(c).maxCoeff();
    if (hi > lo) {
      out.col(c) = (X.col(c).array() - lo) / (hi - lo);
    } else {
      out.col(c).setZero();
    }
  }
  return out;
}

/// Similarity used by the baseline comparison. Cosine and Jaccard see
/// features shifted onto [0, 1] per column so their values stay in [0, 1].
inline ProximityMatrix feature_similarity(MeasureKind kind, const Eigen::MatrixXd& X,
                                          double rbf_gamma = kDefaultRbfGamma) {
  switch (kind) {
    case MeasureKind::cosine: return cosine_matrix(minmax_columns(X));
    case MeasureKind::jaccard: return jaccard_matrix(minmax_columns(X));
    case MeasureKind::rbf: return rbf_matrix(X, rbf_gamma);
    default: throw PreconditionError("feature_similarity: " + to_string(kind) + " is a forest measure");
  }
}

/// Transductive node-classification input: every row is a node; labels of
/// non-training nodes are hidden (-1).
struct GraphData {
  Adjacency adjacency;
  Eigen::MatrixXd features;
  std::vector<char> train_mask;
  std::vector<char> test_mask;
  std::vector<int> labels;
  int n_classes = 0;

  int n_nodes() const { return static_cast<int>(features.rows()); }

  std::vector<int> train_nodes() const {
    std::vector<int> out;
    for (int i = 0; i < n_nodes(); ++i) {
      if (train_mask[i]) out.push_back(i);
    }
    return out;
  }

  std::vector<int> test_nodes() const {
    std::vector<int> out;
    for (int i = 0; i < n_nodes(); ++i) {
      if (test_mask[i]) out.push_back(i);
    }
    return out;
  }
};

inline GraphData assemble_graph(Adjacency adjacency, Eigen::MatrixXd features, const std::vector<int>& labels,
                                int n_classes, const std::vector<int>& train_rows) {
  const auto n = features.rows();
  if (adjacency.n_nodes != n || static_cast<Eigen::Index>(labels.size()) != n) {
    throw PreconditionError("assemble_graph: adjacency, features and labels must cover the same nodes");
  }
  GraphData g;
  g.adjacency = std::move(adjacency);
  g.features = std::move(features);
  g.n_classes = n_classes;
  g.train_mask.assign(n, 0);
  g.labels.assign(n, -1);
  for (int r : train_rows) {
    if (r < 0 || r >= n) throw PreconditionError("assemble_graph: train row out of range");
    g.train_mask[r] = 1;
    g.labels[r] = labels[r];
  }
  g.test_mask.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) g.test_mask[i] = !g.train_mask[i];
  return g;
}

/// Same graph with training restricted to `keep` (a subset of the current
/// training nodes); every other label is hidden.
inline GraphData restrict_training(const GraphData& g, const std::vector<int>& keep) {
  GraphData out = g;
  std::ranges::fill(out.train_mask, 0);
  std::ranges::fill(out.labels, -1);
  for (int r : keep) {
    if (!g.train_mask.at(r)) throw PreconditionError("restrict_training: node is not a training node");
    out.train_mask[r] = 1;
    out.labels[r] = g.labels[r];
  }
  for (int i = 0; i < out.n_nodes(); ++i) out.test_mask[i] = !out.train_mask[i];
  return out;
}

inline std::string format_real(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

/// "# nodes=N alpha=a kind=K" then one "i j" line per edge, i < j, sorted.
inline void write_edge_list(const Adjacency& a, std::ostream& out) {
  out << "# nodes=" << a.n_nodes << " alpha=" << format_real(a.alpha) << " kind=" << to_string(a.source_kind)
      << '\n';
  for (auto [i, j] : a.edges) out << i << ' ' << j << '\n';
}

}  // namespace rfgnn
