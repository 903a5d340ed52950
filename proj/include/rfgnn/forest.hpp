#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "rfgnn/error.hpp"
#include "rfgnn/metrics.hpp"
#include "rfgnn/rng.hpp"
#include "rfgnn/tabular_io.hpp"

namespace rfgnn {

enum class MaxFeatures { sqrt, all };

struct ForestParams {
  int n_trees = 100;
  int min_samples_split = 2;
  int min_samples_leaf = 1;
  MaxFeatures max_features = MaxFeatures::sqrt;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_trees < 1) throw PreconditionError("ForestParams: n_trees must be positive");
    if (min_samples_split < 2) throw PreconditionError("ForestParams: min_samples_split must be >= 2");
    if (min_samples_leaf < 1) throw PreconditionError("ForestParams: min_samples_leaf must be >= 1");
  }

  friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

/// Either a split (feature >= 0) or a leaf (feature < 0, leaf_id >= 0).
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int leaf_id = -1;

  bool is_leaf() const { return feature < 0; }
};

class DecisionTree {
 public:
  std::vector<TreeNode> nodes;
  // In-bag class counts per leaf, counted with bootstrap multiplicity.
  std::vector<std::vector<std::int64_t>> leaf_counts;

  int n_leaves() const { return static_cast<int>(leaf_counts.size()); }

  template <typename Row>
  int leaf_of(const Row& x) const {
    int at = 0;
    while (!nodes[at].is_leaf()) {
      const auto& n = nodes[at];
      at = x(n.feature) <= n.threshold ? n.left : n.right;
    }
    return nodes[at].leaf_id;
  }
};

using InbagCounts = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// N x T matrix of leaf ids: entry (i, t) is the leaf of row i in tree t.
using LeafIndexMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct RandomForest {
  std::vector<DecisionTree> trees;
  InbagCounts inbag;  // T x n_train, bootstrap multiplicities c_j(t)
  int n_train = 0;
  int n_features = 0;
  int n_classes = 0;
  std::vector<double> class_frequencies;
  ForestParams params;

  int n_trees() const { return static_cast<int>(trees.size()); }
  bool is_oob(int tree, int row) const { return inbag(tree, row) == 0; }

  std::vector<int> oob_rows(int tree) const {
    std::vector<int> out;
    for (int j = 0; j < n_train; ++j) {
      if (is_oob(tree, j)) out.push_back(j);
    }
    return out;
  }

  std::vector<int> oob_trees(int row) const {
    std::vector<int> out;
    for (int t = 0; t < n_trees(); ++t) {
      if (is_oob(t, row)) out.push_back(t);
    }
    return out;
  }
};

namespace detail {

inline int features_per_node(MaxFeatures rule, int d) {
  if (rule == MaxFeatures::all) return d;
  return std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(d)))));
}

// Sum over classes of n_k^2 / n. Maximizing the children's total of this
// quantity is equivalent to minimizing weighted Gini impurity.
inline double gini_score(const std::vector<std::int64_t>& counts, std::int64_t total) {
  if (total == 0) return 0.0;
  double s = 0.0;
  for (auto c : counts) s += static_cast<double>(c) * static_cast<double>(c);
  return s / static_cast<double>(total);
}

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

inline bool better_split(const SplitChoice& a, const SplitChoice& b) {
  if (b.feature < 0) return true;
  if (a.gain != b.gain) return a.gain > b.gain;
  if (a.feature != b.feature) return a.feature < b.feature;
  return a.threshold < b.threshold;
}

}  // namespace detail

/// Greedy CART with Gini impurity. Rows with zero weight take no part in
/// fitting; positive weights act as integer multiplicities.
inline DecisionTree fit_tree(const Eigen::MatrixXd& X, std::span<const int> y, std::span<const int> weights,
                             int n_classes, const ForestParams& params, Rng& rng) {
  if (static_cast<std::size_t>(X.rows()) != y.size() || y.size() != weights.size()) {
    throw PreconditionError("fit_tree: X, y and weights must have equal length");
  }
  std::vector<int> rows;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] > 0) rows.push_back(static_cast<int>(i));
  }
  if (rows.empty()) throw PreconditionError("fit_tree: sum of weights must be positive");

  const int d = static_cast<int>(X.cols());
  const int per_node = detail::features_per_node(params.max_features, d);
  const std::int64_t min_leaf = params.min_samples_leaf;
  constexpr double kMinGain = 1e-9;

  DecisionTree tree;
  tree.nodes.emplace_back();
  struct Pending {
    int node, begin, end;
  };
  std::vector<Pending> stack{{0, 0, static_cast<int>(rows.size())}};
  std::vector<int> order(d);
  std::vector<std::pair<double, int>> sorted;

  while (!stack.empty()) {
    const Pending p = stack.back();
    stack.pop_back();

    std::vector<std::int64_t> counts(n_classes, 0);
    std::int64_t total = 0;
    for (int r = p.begin; r < p.end; ++r) {
      counts[y[rows[r]]] += weights[rows[r]];
      total += weights[rows[r]];
    }
    const bool pure = std::ranges::count_if(counts, [](auto c) { return c > 0; }) <= 1;

    detail::SplitChoice best;
    if (!pure && total >= params.min_samples_split && total >= 2 * min_leaf) {
      const double parent_score = detail::gini_score(counts, total);
      std::iota(order.begin(), order.end(), 0);
      int evaluated = 0;
      for (int k = 0; k < d && evaluated < per_node; ++k) {
        std::swap(order[k], order[k + static_cast<int>(rng.index(d - k))]);
        const int f = order[k];
        sorted.clear();
        for (int r = p.begin; r < p.end; ++r) sorted.emplace_back(X(rows[r], f), rows[r]);
        std::ranges::sort(sorted);
        if (sorted.front().first == sorted.back().first) continue;  // constant here
        ++evaluated;

        std::vector<std::int64_t> left(n_classes, 0);
        std::int64_t left_total = 0;
        for (std::size_t s = 0; s + 1 < sorted.size(); ++s) {
          const int row = sorted[s].second;
          left[y[row]] += weights[row];
          left_total += weights[row];
          if (sorted[s].first == sorted[s + 1].first) continue;
          const std::int64_t right_total = total - left_total;
          if (left_total < min_leaf || right_total < min_leaf) continue;
          std::vector<std::int64_t> right(n_classes);
          for (int c = 0; c < n_classes; ++c) right[c] = counts[c] - left[c];
          const double gain = detail::gini_score(left, left_total) + detail::gini_score(right, right_total) -
                              parent_score;
          if (gain <= kMinGain) continue;
          const double lo = sorted[s].first, hi = sorted[s + 1].first;
          double threshold = lo + (hi - lo) / 2.0;
          if (!(threshold < hi)) threshold = lo;
          const detail::SplitChoice cand{f, threshold, gain};
          if (detail::better_split(cand, best)) best = cand;
        }
      }
    }

    if (best.feature < 0) {
      tree.nodes[p.node].leaf_id = tree.n_leaves();
      tree.leaf_counts.push_back(std::move(counts));
      continue;
    }

    auto mid = std::partition(rows.begin() + p.begin, rows.begin() + p.end,
                              [&](int r) { return X(r, best.feature) <= best.threshold; });
    const int split_at = static_cast<int>(mid - rows.begin());
    const int left_node = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    auto& node = tree.nodes[p.node];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = left_node;
    node.right = left_node + 1;
    // right first so the left subtree is expanded (and numbered) first
    stack.push_back({left_node + 1, split_at, p.end});
    stack.push_back({left_node, p.begin, split_at});
  }
  return tree;
}

/// Bootstrap forest. Tree t draws its bootstrap and feature subsets from a
/// generator seeded with params.seed + t, so adding trees never changes the
/// trees already present.
inline RandomForest fit_forest(const Eigen::MatrixXd& X, std::span<const int> y, int n_classes,
                               const ForestParams& params) {
  params.validate();
  const int n = static_cast<int>(X.rows());
  if (n < 2) throw PreconditionError("fit_forest: need at least 2 training rows");
  if (static_cast<std::size_t>(n) != y.size()) throw PreconditionError("fit_forest: X and y length mismatch");

  RandomForest forest;
  forest.n_train = n;
  forest.n_features = static_cast<int>(X.cols());
  forest.n_classes = n_classes;
  forest.params = params;
  forest.class_frequencies.assign(n_classes, 0.0);
  for (int label : y) forest.class_frequencies.at(label) += 1.0 / n;
  forest.inbag = InbagCounts::Zero(params.n_trees, n);
  forest.trees.reserve(params.n_trees);

  std::vector<int> weights(n);
  for (int t = 0; t < params.n_trees; ++t) {
    Rng rng(params.seed + static_cast<std::uint64_t>(t));
    std::ranges::fill(weights, 0);
    for (int draw = 0; draw < n; ++draw) ++weights[rng.index(n)];
    for (int j = 0; j < n; ++j) forest.inbag(t, j) = weights[j];
    forest.trees.push_back(fit_tree(X, y, weights, n_classes, params, rng));
  }
  return forest;
}

inline LeafIndexMatrix apply(const RandomForest& forest, const Eigen::MatrixXd& X) {
  if (X.cols() != forest.n_features) {
    throw PreconditionError("apply: expected " + std::to_string(forest.n_features) + " columns, got " +
                            std::to_string(X.cols()));
  }
  LeafIndexMatrix leaves(X.rows(), forest.n_trees());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const auto row = X.row(i);
    for (int t = 0; t < forest.n_trees(); ++t) leaves(i, t) = forest.trees[t].leaf_of(row);
  }
  return leaves;
}

namespace detail {

template <typename Row>
void add_leaf_vote(const std::vector<std::int64_t>& counts, Row&& acc) {
  std::int64_t total = 0;
  for (auto c : counts) total += c;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    acc(static_cast<Eigen::Index>(k)) += static_cast<double>(counts[k]) / static_cast<double>(total);
  }
}

inline int argmax_lowest(const Eigen::Ref<const Eigen::RowVectorXd>& v) {
  int best = 0;
  for (Eigen::Index k = 1; k < v.size(); ++k) {
    if (v(k) > v(best)) best = static_cast<int>(k);
  }
  return best;
}

}  // namespace detail

/// Mean over all trees of each leaf's normalized in-bag class distribution.
inline Eigen::MatrixXd predict_proba(const RandomForest& forest, const Eigen::MatrixXd& X) {
  const auto leaves = apply(forest, X);
  Eigen::MatrixXd proba = Eigen::MatrixXd::Zero(X.rows(), forest.n_classes);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (int t = 0; t < forest.n_trees(); ++t) {
      detail::add_leaf_vote(forest.trees[t].leaf_counts[leaves(i, t)], proba.row(i));
    }
  }
  proba /= static_cast<double>(forest.n_trees());
  return proba;
}

inline std::vector<int> predict(const RandomForest& forest, const Eigen::MatrixXd& X) {
  const auto proba = predict_proba(forest, X);
  std::vector<int> out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) out[i] = detail::argmax_lowest(proba.row(i));
  return out;
}

struct OobPrediction {
  std::vector<int> labels;
  Eigen::MatrixXd vote_shares;  // n_train x c
};

/// Out-of-bag prediction: row i is voted on only by trees where it was not
/// drawn. Rows that are in-bag everywhere fall back to the training class
/// frequencies.
inline OobPrediction oob_predict(const RandomForest& forest, const Eigen::MatrixXd& X_train) {
  if (X_train.rows() != forest.n_train) throw PreconditionError("oob_predict: row count differs from training");
  const auto leaves = apply(forest, X_train);
  OobPrediction out;
  out.vote_shares = Eigen::MatrixXd::Zero(forest.n_train, forest.n_classes);
  out.labels.resize(forest.n_train);
  for (int i = 0; i < forest.n_train; ++i) {
    int voters = 0;
    for (int t = 0; t < forest.n_trees(); ++t) {
      if (!forest.is_oob(t, i)) continue;
      detail::add_leaf_vote(forest.trees[t].leaf_counts[leaves(i, t)], out.vote_shares.row(i));
      ++voters;
    }
    if (voters == 0) {
      for (int k = 0; k < forest.n_classes; ++k) out.vote_shares(i, k) = forest.class_frequencies[k];
    } else {
      out.vote_shares.row(i) /= static_cast<double>(voters);
    }
    out.labels[i] = detail::argmax_lowest(out.vote_shares.row(i));
  }
  return out;
}

/// The tuning grid used for forest selection: n_trees x min_samples_split x
/// min_samples_leaf, in that nesting order.
inline std::vector<ForestParams> make_forest_grid(const std::vector<int>& n_trees,
                                                  const std::vector<int>& min_samples_split,
                                                  const std::vector<int>& min_samples_leaf,
                                                  MaxFeatures max_features = MaxFeatures::sqrt,
                                                  std::uint64_t seed = 0) {
  std::vector<ForestParams> grid;
  for (int t : n_trees) {
    for (int s : min_samples_split) {
      for (int l : min_samples_leaf) grid.push_back({t, s, l, max_features, seed});
    }
  }
  return grid;
}

inline std::vector<ForestParams> default_forest_grid(std::uint64_t seed = 0) {
  return make_forest_grid({50, 100, 200, 500, 700, 1000}, {2, 5, 10}, {1, 20, 50, 80, 100, 150, 200, 300, 500},
                          MaxFeatures::sqrt, seed);
}

struct GridSearchResult {
  ForestParams best;
  std::size_t best_index = 0;
  std::vector<double> mean_scores;  // per candidate, NaN when no fold was usable
};

/// k-fold stratified cross-validation over `grid`, scored by weighted F1.
/// Folds whose training part lacks a class are skipped for every candidate;
/// ties go to the earliest candidate.
inline GridSearchResult grid_search(const Eigen::MatrixXd& X, const std::vector<int>& y, int n_classes,
                                    const std::vector<ForestParams>& grid, int k, std::uint64_t cv_seed = 0) {
  if (grid.empty()) throw PreconditionError("grid_search: empty grid");
  if (k < 2) throw PreconditionError("grid_search: need k >= 2");
  for (const auto& p : grid) p.validate();

  const auto fold = stratified_folds(y, n_classes, k, cv_seed);
  struct Fold {
    std::vector<int> fit, held;
  };
  std::vector<Fold> folds;
  for (int f = 0; f < k; ++f) {
    Fold fd;
    std::vector<int> present(n_classes, 0);
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (fold[i] == f) {
        fd.held.push_back(static_cast<int>(i));
      } else {
        fd.fit.push_back(static_cast<int>(i));
        present[y[i]] = 1;
      }
    }
    const bool complete = std::ranges::all_of(present, [](int p) { return p == 1; });
    if (complete && !fd.held.empty() && fd.fit.size() >= 2) folds.push_back(std::move(fd));
  }

  GridSearchResult result;
  result.mean_scores.assign(grid.size(), std::numeric_limits<double>::quiet_NaN());
  bool have_best = false;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    if (folds.empty()) break;
    double sum = 0.0;
    for (const auto& fd : folds) {
      const auto Xf = gather_rows(X, fd.fit);
      const auto yf = gather(y, fd.fit);
      const auto forest = fit_forest(Xf, yf, n_classes, grid[g]);
      const auto pred = predict(forest, gather_rows(X, fd.held));
      sum += weighted_f1(gather(y, fd.held), pred, n_classes);
    }
    result.mean_scores[g] = sum / static_cast<double>(folds.size());
    if (!have_best || result.mean_scores[g] > result.mean_scores[result.best_index]) {
      result.best_index = g;
      have_best = true;
    }
  }
  result.best = grid[result.best_index];
  return result;
}

// Serialization ------------------------------------------------------------

inline constexpr int kForestFormatVersion = 1;

inline std::string to_string(MaxFeatures m) { return m == MaxFeatures::sqrt ? "sqrt" : "all"; }

inline MaxFeatures max_features_from_string(const std::string& s) {
  if (s == "sqrt") return MaxFeatures::sqrt;
  if (s == "all") return MaxFeatures::all;
  throw DataError("unknown max_features rule '" + s + "'");
}

inline nlohmann::json to_json(const ForestParams& p) {
  return {{"n_trees", p.n_trees},
          {"min_samples_split", p.min_samples_split},
          {"min_samples_leaf", p.min_samples_leaf},
          {"max_features", to_string(p.max_features)},
          {"seed", p.seed}};
}

inline ForestParams forest_params_from_json(const nlohmann::json& j) {
  ForestParams p;
  p.n_trees = j.value("n_trees", p.n_trees);
  p.min_samples_split = j.value("min_samples_split", p.min_samples_split);
  p.min_samples_leaf = j.value("min_samples_leaf", p.min_samples_leaf);
  p.max_features = max_features_from_string(j.value("max_features", std::string("sqrt")));
  p.seed = j.value("seed", p.seed);
  return p;
}

inline nlohmann::json to_json(const RandomForest& forest) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& tree : forest.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : tree.nodes) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.leaf_id});
    trees.push_back({{"nodes", nodes}, {"leaf_counts", tree.leaf_counts}});
  }
  nlohmann::json inbag = nlohmann::json::array();
  for (Eigen::Index t = 0; t < forest.inbag.rows(); ++t) {
    inbag.push_back(std::vector<int>(forest.inbag.row(t).data(), forest.inbag.row(t).data() + forest.n_train));
  }
  return {{"format", "rfgnn-forest"},
          {"version", kForestFormatVersion},
          {"n_train", forest.n_train},
          {"n_features", forest.n_features},
          {"n_classes", forest.n_classes},
          {"params", to_json(forest.params)},
          {"class_frequencies", forest.class_frequencies},
          {"inbag", inbag},
          {"trees", trees}};
}

inline RandomForest forest_from_json(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "rfgnn-forest") throw DataError("not a forest dump");
  if (j.at("version").get<int>() != kForestFormatVersion) {
    throw DataError("unsupported forest format version " + j.at("version").dump());
  }
  RandomForest f;
  f.n_train = j.at("n_train");
  f.n_features = j.at("n_features");
  f.n_classes = j.at("n_classes");
  f.params = forest_params_from_json(j.at("params"));
  f.class_frequencies = j.at("class_frequencies").get<std::vector<double>>();
  const auto& trees = j.at("trees");
  f.inbag = InbagCounts::Zero(static_cast<Eigen::Index>(trees.size()), f.n_train);
  const auto& inbag = j.at("inbag");
  for (std::size_t t = 0; t < inbag.size(); ++t) {
    const auto row = inbag[t].get<std::vector<int>>();
    if (static_cast<int>(row.size()) != f.n_train) throw DataError("inbag row length mismatch");
    for (int c = 0; c < f.n_train; ++c) f.inbag(static_cast<Eigen::Index>(t), c) = row[c];
  }
  for (const auto& jt : trees) {
    DecisionTree tree;
    for (const auto& jn : jt.at("nodes")) {
      tree.nodes.push_back({jn[0].get<int>(), jn[1].get<double>(), jn[2].get<int>(), jn[3].get<int>(),
                            jn[4].get<int>()});
    }
    tree.leaf_counts = jt.at("leaf_counts").get<std::vector<std::vector<std::int64_t>>>();
    f.trees.push_back(std::move(tree));
  }
  return f;
}

inline void save_forest(const RandomForest& forest, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write forest to '" + path.string() + "'");
  out << to_json(forest).dump() << '\n';
}

inline RandomForest load_forest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read forest from '" + path.string() + "'");
  return forest_from_json(nlohmann::json::parse(in));
}

}  // namespace rfgnn
