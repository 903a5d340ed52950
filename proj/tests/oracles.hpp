#pragma once

// Independent reference implementations used only by tests. They follow the
// textbook definitions with direct loops over trees and sets, sharing no code
// with the library's accumulation paths.

#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <vector>

#include <Eigen/Dense>

#include "rfgnn/forest.hpp"
#include "rfgnn/gcn.hpp"

namespace oracle {

inline Eigen::MatrixXd original(const rfgnn::LeafIndexMatrix& leaves) {
  const auto n = leaves.rows();
  const auto T = leaves.cols();
  Eigen::MatrixXd P(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      int same = 0;
      for (Eigen::Index t = 0; t < T; ++t) same += leaves(i, t) == leaves(j, t);
      P(i, j) = static_cast<double>(same) / static_cast<double>(T);
    }
  }
  return P;
}

// c_j(t) for matrix row j; rows outside `train_rows` are never in-bag.
inline int multiplicity(const rfgnn::RandomForest& f, const std::vector<int>& train_rows, int row, int t) {
  for (std::size_t p = 0; p < train_rows.size(); ++p) {
    if (train_rows[p] == row) return f.inbag(t, static_cast<Eigen::Index>(p));
  }
  return 0;
}

inline std::set<int> oob_set(const rfgnn::RandomForest& f, const std::vector<int>& train_rows, int n, int t) {
  std::set<int> out;
  for (int j = 0; j < n; ++j) {
    if (multiplicity(f, train_rows, j, t) == 0) out.insert(j);
  }
  return out;
}

inline Eigen::MatrixXd oob(const rfgnn::RandomForest& f, const rfgnn::LeafIndexMatrix& leaves,
                           const std::vector<int>& train_rows) {
  const int n = static_cast<int>(leaves.rows());
  const int T = static_cast<int>(leaves.cols());
  std::vector<std::set<int>> O(T);
  for (int t = 0; t < T; ++t) O[t] = oob_set(f, train_rows, n, t);
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      int num = 0, den = 0;
      for (int t = 0; t < T; ++t) {
        if (!O[t].contains(i)) continue;  // t in S_i
        if (O[t].contains(j)) {
          ++den;
          if (leaves(i, t) == leaves(j, t)) ++num;
        }
      }
      P(i, j) = den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    }
  }
  return P;
}

inline Eigen::MatrixXd rfgap(const rfgnn::RandomForest& f, const rfgnn::LeafIndexMatrix& leaves,
                             const std::vector<int>& train_rows) {
  const int n = static_cast<int>(leaves.rows());
  const int T = static_cast<int>(leaves.cols());
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    std::vector<int> S;
    for (int t = 0; t < T; ++t) {
      if (multiplicity(f, train_rows, i, t) == 0) S.push_back(t);
    }
    if (S.empty()) continue;
    for (int j = 0; j < n; ++j) {
      double sum = 0.0;
      for (int t : S) {
        // J_i(t): in-bag rows sharing i's leaf; |M_i(t)| counts multiplicity.
        std::map<int, int> J;
        for (int k = 0; k < n; ++k) {
          const int c = multiplicity(f, train_rows, k, t);
          if (c > 0 && leaves(k, t) == leaves(i, t)) J[k] = c;
        }
        double M = 0.0;
        for (auto [k, c] : J) M += c;
        if (J.contains(j)) sum += J[j] / M;
      }
      P(i, j) = sum / static_cast<double>(S.size());
    }
  }
  return P;
}

/// Leaf reached by replaying the node predicates one at a time.
inline int route(const rfgnn::DecisionTree& tree, const Eigen::RowVectorXd& x) {
  std::size_t at = 0;
  for (;;) {
    const auto& node = tree.nodes.at(at);
    if (node.feature < 0) return node.leaf_id;
    const bool go_left = !(x(node.feature) > node.threshold);
    at = static_cast<std::size_t>(go_left ? node.left : node.right);
  }
}

/// Weighted F1 from per-class precision and recall (harmonic mean).
inline double weighted_f1(const std::vector<int>& y, const std::vector<int>& p, int c) {
  double total = 0.0;
  for (int k = 0; k < c; ++k) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      tp += y[i] == k && p[i] == k;
      fp += y[i] != k && p[i] == k;
      fn += y[i] == k && p[i] != k;
    }
    const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    total += (tp + fn) * f1;
  }
  return total / static_cast<double>(y.size());
}

/// Biases drawn away from zero so no ReLU input sits exactly on its kink,
/// where one-sided and central differences disagree.
inline void jitter_biases(rfgnn::GCNModel& m, rfgnn::Rng& rng) {
  for (Eigen::Index k = 0; k < m.head.b_a.size(); ++k) m.head.b_a(k) = rng.uniform(-0.5, 0.5);
  for (Eigen::Index k = 0; k < m.head.b_o.size(); ++k) m.head.b_o(k) = rng.uniform(-0.5, 0.5);
}

/// Central finite differences of `loss` with respect to every parameter;
/// returns the worst relative error against `analytic`. Entries where both
/// values are below `floor` in magnitude are compared absolutely.
inline double max_gradient_error(rfgnn::GCNModel model, const rfgnn::GCNModel& analytic,
                                 const std::function<double(const rfgnn::GCNModel&)>& loss, double eps = 1e-5,
                                 double floor = 1e-7) {
  double worst = 0.0;
  rfgnn::GCNModel probe = model;
  rfgnn::zip_parameters(
      [&](auto& p, const auto& g) {
        for (Eigen::Index k = 0; k < p.size(); ++k) {
          const double saved = p.data()[k];
          p.data()[k] = saved + eps;
          const double up = loss(probe);
          p.data()[k] = saved - eps;
          const double down = loss(probe);
          p.data()[k] = saved;
          const double numeric = (up - down) / (2 * eps);
          const double a = g.data()[k];
          const double scale = std::max(std::abs(a), std::abs(numeric));
          const double err = scale < floor ? std::abs(a - numeric) : std::abs(a - numeric) / scale;
          worst = std::max(worst, err);
        }
      },
      probe, analytic);
  return worst;
}

}  // namespace oracle
