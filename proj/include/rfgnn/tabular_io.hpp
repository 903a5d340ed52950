#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "rfgnn/error.hpp"
#include "rfgnn/rng.hpp"

namespace rfgnn {

enum class ColumnKind { numeric, categorical };

/// One feature column. Numeric columns fill `numbers`; categorical columns
/// fill `codes` (indices into `vocabulary`, ordered by first appearance).
struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  std::vector<double> numbers;
  std::vector<int> codes;
  std::vector<std::string> vocabulary;
};

struct TabularDataset {
  std::vector<Column> columns;
  std::vector<int> labels;
  std::vector<std::string> class_names;

  std::size_t n_rows() const { return labels.size(); }
  int n_classes() const { return static_cast<int>(class_names.size()); }
};

/// Output span of one source column inside the encoded matrix.
struct ColumnEncoding {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  int offset = 0;
  int width = 1;
  std::vector<std::string> vocabulary;
  double mean = 0.0;
  double scale = 1.0;
};

struct FeatureMatrix {
  Eigen::MatrixXd values;
  std::vector<ColumnEncoding> encoding;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

struct SplitIndices {
  std::vector<int> train;
  std::vector<int> test;
  std::uint64_t seed = 0;
};

/// Where a dataset lives on disk and how to interpret it.
struct DatasetManifest {
  std::filesystem::path csv_path;
  std::string label_column;
  std::vector<std::string> categorical_columns;
};

namespace detail {

// RFC 4180 record reader: quoted fields, doubled quotes, CRLF or LF endings,
// newlines inside quotes.
inline std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  char ch;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };
  while (in.get(ch)) {
    if (in_quotes) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get(ch);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"':
        if (field_started) throw DataError("stray quote inside unquoted CSV field");
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (in.peek() == '\n') in.get(ch);
        end_record();
        break;
      case '\n':
        end_record();
        break;
      default:
        field.push_back(ch);
        field_started = true;
    }
  }
  if (in_quotes) throw DataError("unterminated quoted CSV field");
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return std::string(s.substr(first, last - first + 1));
}

inline bool parse_double(const std::string& text, double& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  const char* begin = t.data();
  if (*begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, t.data() + t.size(), out);
  return ec == std::errc{} && ptr == t.data() + t.size() && std::isfinite(out);
}

}  // namespace detail

inline TabularDataset parse_dataset(std::istream& in, const std::string& label_column,
                                    const std::vector<std::string>& categorical_columns) {
  auto records = detail::parse_csv(in);
  if (records.empty()) throw DataError("CSV has no header row");
  const auto& header = records.front();
  if (header.size() >= 1 && header[0].starts_with("\xEF\xBB\xBF")) {
    records.front()[0].erase(0, 3);
  }

  int label_at = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (detail::trim(header[c]) == label_column) label_at = static_cast<int>(c);
  }
  if (label_at < 0) throw DataError("label column '" + label_column + "' not found in header");

  const std::set<std::string> categorical(categorical_columns.begin(), categorical_columns.end());
  for (const auto& name : categorical) {
    bool found = false;
    for (const auto& h : header) found = found || detail::trim(h) == name;
    if (!found) throw DataError("categorical column '" + name + "' not found in header");
  }

  TabularDataset ds;
  std::vector<int> column_of_field(header.size(), -1);
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (static_cast<int>(c) == label_at) continue;
    Column col;
    col.name = detail::trim(header[c]);
    col.kind = categorical.contains(col.name) ? ColumnKind::categorical : ColumnKind::numeric;
    column_of_field[c] = static_cast<int>(ds.columns.size());
    ds.columns.push_back(std::move(col));
  }

  std::unordered_map<std::string, int> class_codes;
  std::vector<std::unordered_map<std::string, int>> token_codes(ds.columns.size());
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    const std::string where = "row " + std::to_string(r + 1);
    if (rec.size() != header.size()) {
      throw DataError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(rec.size()));
    }
    for (std::size_t c = 0; c < rec.size(); ++c) {
      const std::string cell = detail::trim(rec[c]);
      if (cell.empty()) throw DataError(where + ": missing value in column '" + detail::trim(header[c]) + "'");
      if (static_cast<int>(c) == label_at) {
        auto [it, inserted] = class_codes.try_emplace(cell, static_cast<int>(ds.class_names.size()));
        if (inserted) ds.class_names.push_back(cell);
        ds.labels.push_back(it->second);
        continue;
      }
      const int k = column_of_field[c];
      Column& col = ds.columns[k];
      if (col.kind == ColumnKind::numeric) {
        double v;
        if (!detail::parse_double(cell, v)) {
          throw DataError(where + ": non-numeric cell '" + cell + "' in numeric column '" + col.name + "'");
        }
        col.numbers.push_back(v);
      } else {
        auto [it, inserted] = token_codes[k].try_emplace(cell, static_cast<int>(col.vocabulary.size()));
        if (inserted) col.vocabulary.push_back(cell);
        col.codes.push_back(it->second);
      }
    }
  }
  if (ds.labels.empty()) throw DataError("CSV has no data rows");
  if (ds.class_names.size() < 2) throw DataError("fewer than 2 classes in label column '" + label_column + "'");
  return ds;
}

inline TabularDataset load_csv(const std::filesystem::path& path, const std::string& label_column,
                               const std::vector<std::string>& categorical_columns = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open CSV file '" + path.string() + "'");
  return parse_dataset(in, label_column, categorical_columns);
}

/// Reads {csv_path, label_column, categorical_columns[]}; a relative
/// csv_path is resolved against the manifest's directory.
inline DatasetManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  DatasetManifest m;
  if (!j.contains("csv_path") || !j.contains("label_column")) {
    throw DataError("dataset manifest needs csv_path and label_column");
  }
  m.csv_path = j.at("csv_path").get<std::string>();
  if (m.csv_path.is_relative()) m.csv_path = base_dir / m.csv_path;
  m.label_column = j.at("label_column").get<std::string>();
  if (j.contains("categorical_columns")) {
    m.categorical_columns = j.at("categorical_columns").get<std::vector<std::string>>();
  }
  return m;
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset manifest '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("invalid manifest JSON: " + std::string(e.what()));
  }
  return manifest_from_json(j, path.parent_path());
}

inline TabularDataset load_dataset(const DatasetManifest& m) {
  return load_csv(m.csv_path, m.label_column, m.categorical_columns);
}

/// Standardizes numeric columns with statistics of `fit_rows` only and
/// one-hot encodes categorical columns over the full vocabulary.
inline FeatureMatrix encode(const TabularDataset& ds, const std::vector<int>& fit_rows) {
  if (fit_rows.empty()) throw PreconditionError("encode: fit_rows must be non-empty");
  const auto n = static_cast<Eigen::Index>(ds.n_rows());
  FeatureMatrix fm;
  int width = 0;
  for (const auto& col : ds.columns) {
    ColumnEncoding enc;
    enc.name = col.name;
    enc.kind = col.kind;
    enc.offset = width;
    if (col.kind == ColumnKind::numeric) {
      double sum = 0.0;
      for (int r : fit_rows) sum += col.numbers.at(r);
      enc.mean = sum / static_cast<double>(fit_rows.size());
      double ss = 0.0;
      for (int r : fit_rows) ss += (col.numbers[r] - enc.mean) * (col.numbers[r] - enc.mean);
      const double sd = std::sqrt(ss / static_cast<double>(fit_rows.size()));
      // constant on the fit rows
      enc.scale = sd > 1e-12 * std::max(1.0, std::abs(enc.mean)) ? sd : 1.0;
      enc.width = 1;
    } else {
      enc.vocabulary = col.vocabulary;
      enc.width = static_cast<int>(col.vocabulary.size());
    }
    width += enc.width;
    fm.encoding.push_back(std::move(enc));
  }

  fm.values = Eigen::MatrixXd::Zero(n, width);
  for (std::size_t c = 0; c < ds.columns.size(); ++c) {
    const auto& col = ds.columns[c];
    const auto& enc = fm.encoding[c];
    for (Eigen::Index r = 0; r < n; ++r) {
      if (col.kind == ColumnKind::numeric) {
        fm.values(r, enc.offset) = (col.numbers[r] - enc.mean) / enc.scale;
      } else {
        fm.values(r, enc.offset + col.codes[r]) = 1.0;
      }
    }
  }
  return fm;
}

/// Recovers the category token of `row` for categorical column `column`
/// from its one-hot block.
inline std::string decode_category(const FeatureMatrix& fm, std::size_t column, Eigen::Index row) {
  const auto& enc = fm.encoding.at(column);
  if (enc.kind != ColumnKind::categorical) throw PreconditionError("decode_category: column is numeric");
  Eigen::Index best;
  fm.values.row(row).segment(enc.offset, enc.width).maxCoeff(&best);
  return enc.vocabulary[best];
}

inline int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

/// Per-class shuffle then take round(count * train_fraction) rows of each
/// class for training. Both index lists are returned sorted.
inline SplitIndices stratified_split(const std::vector<int>& labels, int n_classes, double train_fraction,
                                     std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw PreconditionError("stratified_split: train_fraction must lie in (0, 1)");
  }
  std::vector<std::vector<int>> by_class(n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) by_class.at(labels[i]).push_back(static_cast<int>(i));

  Rng rng(seed);
  SplitIndices split;
  split.seed = seed;
  for (int k = 0; k < n_classes; ++k) {
    auto& rows = by_class[k];
    const int take = round_half_up(static_cast<double>(rows.size()) * train_fraction);
    if (take <= 0) {
      throw PreconditionError("stratified_split: class " + std::to_string(k) + " gets no training rows");
    }
    rng.shuffle(std::span<int>(rows));
    split.train.insert(split.train.end(), rows.begin(), rows.begin() + std::min<int>(take, rows.size()));
    split.test.insert(split.test.end(), rows.begin() + std::min<int>(take, rows.size()), rows.end());
  }
  std::ranges::sort(split.train);
  std::ranges::sort(split.test);
  return split;
}

inline SplitIndices stratified_split(const TabularDataset& ds, double train_fraction, std::uint64_t seed) {
  return stratified_split(ds.labels, ds.n_classes(), train_fraction, seed);
}

/// Assigns each position of `labels` to one of k folds, dealing the
/// shuffled members of every class round-robin so class shares stay even.
inline std::vector<int> stratified_folds(const std::vector<int>& labels, int n_classes, int k, std::uint64_t seed) {
  if (k < 2) throw PreconditionError("stratified_folds: need at least 2 folds");
  if (static_cast<std::size_t>(k) > labels.size()) throw PreconditionError("stratified_folds: more folds than rows");
  std::vector<std::vector<int>> by_class(n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) by_class.at(labels[i]).push_back(static_cast<int>(i));
  Rng rng(seed);
  std::vector<int> fold(labels.size(), 0);
  int next = 0;
  for (auto& rows : by_class) {
    rng.shuffle(std::span<int>(rows));
    for (int r : rows) {
      fold[r] = next;
      next = (next + 1) % k;
    }
  }
  return fold;
}

inline std::vector<int> gather(const std::vector<int>& values, const std::vector<int>& at) {
  std::vector<int> out;
  out.reserve(at.size());
  for (int i : at) out.push_back(values.at(i));
  return out;
}

inline Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, const std::vector<int>& at) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(at.size()), m.cols());
  for (std::size_t r = 0; r < at.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(at[r]);
  return out;
}

}  // namespace rfgnn
