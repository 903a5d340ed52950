#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "rfgnn/error.hpp"
#include "rfgnn/graph_build.hpp"
#include "rfgnn/rng.hpp"
#include "rfgnn/tabular_io.hpp"

namespace rfgnn {

struct BlobSpec {
  int n_rows = 300;
  int n_classes = 2;
  int n_features = 2;
  double separation = 3.0;  // distance from each centre to the boundary with its neighbour, in sigmas
  double sigma = 1.0;
  int label_features = 0;   // extra columns equal to label + N(0, label_noise)
  double label_noise = 0.5;
  std::uint64_t seed = 0;
};

/// Isotropic Gaussian classes; class k is centred at 2k * separation on the
/// first axis, so neighbouring classes meet `separation` sigmas from each
/// centre. Rows cycle through classes so counts stay balanced.
inline TabularDataset make_blobs(const BlobSpec& spec) {
  if (spec.n_classes < 2 || spec.n_features < 1 || spec.n_rows < spec.n_classes) {
    throw PreconditionError("make_blobs: need >= 2 classes, >= 1 feature and a row per class");
  }
  Rng rng(spec.seed);
  TabularDataset ds;
  for (int f = 0; f < spec.n_features + spec.label_features; ++f) {
    Column c;
    c.name = (f < spec.n_features ? "x" : "z") + std::to_string(f < spec.n_features ? f : f - spec.n_features);
    ds.columns.push_back(std::move(c));
  }
  for (int k = 0; k < spec.n_classes; ++k) ds.class_names.push_back("c" + std::to_string(k));
  for (int i = 0; i < spec.n_rows; ++i) {
    const int k = i % spec.n_classes;
    ds.labels.push_back(k);
    for (int f = 0; f < spec.n_features; ++f) {
      const double centre = f == 0 ? 2.0 * k * spec.separation * spec.sigma : 0.0;
      ds.columns[f].numbers.push_back(centre + spec.sigma * rng.normal());
    }
    for (int f = 0; f < spec.label_features; ++f) {
      ds.columns[spec.n_features + f].numbers.push_back(k + spec.label_noise * rng.normal());
    }
  }
  return ds;
}

/// Writes a dataset back out as CSV with the label in a trailing "label"
/// column.
inline void write_csv(const TabularDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write CSV '" + path.string() + "'");
  for (const auto& c : ds.columns) out << c.name << ',';
  out << "label\n";
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    for (const auto& c : ds.columns) {
      if (c.kind == ColumnKind::numeric) {
        out << format_real(c.numbers[i]) << ',';
      } else {
        out << c.vocabulary[c.codes[i]] << ',';
      }
    }
    out << ds.class_names[ds.labels[i]] << '\n';
  }
}

}  // namespace rfgnn
