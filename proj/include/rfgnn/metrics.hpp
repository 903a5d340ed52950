#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "rfgnn/error.hpp"

namespace rfgnn {

/// Row = true class, column = predicted class.
inline std::vector<std::vector<std::int64_t>> confusion_matrix(std::span<const int> y_true,
                                                               std::span<const int> y_pred, int n_classes) {
  if (y_true.size() != y_pred.size()) throw PreconditionError("confusion_matrix: length mismatch");
  std::vector<std::vector<std::int64_t>> cm(n_classes, std::vector<std::int64_t>(n_classes, 0));
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] < 0 || y_true[i] >= n_classes || y_pred[i] < 0 || y_pred[i] >= n_classes) {
      throw PreconditionError("confusion_matrix: label out of range");
    }
    ++cm[y_true[i]][y_pred[i]];
  }
  return cm;
}

// Per-class F1 averaged with weights proportional to true-class support.
// F1 is taken as 2tp / (2tp + fp + fn), which equals the harmonic mean of
// precision and recall and is 0 whenever tp = 0 (empty precision or recall
// denominators count as 0).
inline double weighted_f1(std::span<const int> y_true, std::span<const int> y_pred, int n_classes) {
  const auto cm = confusion_matrix(y_true, y_pred, n_classes);
  if (y_true.empty()) return 0.0;
  double total = 0.0;
  for (int k = 0; k < n_classes; ++k) {
    std::int64_t support = 0, predicted = 0;
    for (int j = 0; j < n_classes; ++j) {
      support += cm[k][j];
      predicted += cm[j][k];
    }
    const std::int64_t tp = cm[k][k];
    const std::int64_t denom = support + predicted;  // 2tp + fp + fn
    if (support == 0 || denom == 0) continue;
    const double f1 = static_cast<double>(2 * tp) / static_cast<double>(denom);
    total += static_cast<double>(support) * f1;
  }
  return total / static_cast<double>(y_true.size());
}

inline double accuracy(std::span<const int> y_true, std::span<const int> y_pred) {
  if (y_true.size() != y_pred.size()) throw PreconditionError("accuracy: length mismatch");
  if (y_true.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) hits += y_true[i] == y_pred[i];
  return static_cast<double>(hits) / static_cast<double>(y_true.size());
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Arithmetic mean and population standard deviation. Scores are summed in
/// sorted order so the result does not depend on input order.
inline MeanStd aggregate_seeds(std::span<const double> scores) {
  if (scores.empty()) throw PreconditionError("aggregate_seeds: need at least one score");
  std::vector<double> sorted(scores.begin(), scores.end());
  std::ranges::sort(sorted);
  double sum = 0.0;
  for (double s : sorted) sum += s;
  const double n = static_cast<double>(sorted.size());
  MeanStd out;
  out.mean = sum / n;
  double ss = 0.0;
  for (double s : sorted) ss += (s - out.mean) * (s - out.mean);
  out.std = std::sqrt(ss / n);
  return out;
}

}  // namespace rfgnn
