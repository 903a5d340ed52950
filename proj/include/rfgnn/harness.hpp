#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "rfgnn/error.hpp"
#include "rfgnn/forest.hpp"
#include "rfgnn/gcn.hpp"
#include "rfgnn/graph_build.hpp"
#include "rfgnn/metrics.hpp"
#include "rfgnn/proximity.hpp"
#include "rfgnn/tabular_io.hpp"

namespace rfgnn {

/// `count` evenly spaced thresholds on [min, max], both ends included.
struct AlphaGrid {
  int count = 51;
  double min = 0.0;
  double max = 1.0;

  std::vector<double> values() const {
    if (count < 1) throw PreconditionError("alpha grid: count must be positive");
    if (count == 1) return {min};
    std::vector<double> out(count);
    for (int k = 0; k < count; ++k) out[k] = min + (max - min) * k / (count - 1);
    out.back() = max;
    return out;
  }
};

/// Axes of the forest tuning grid.
struct ForestGridSpec {
  std::vector<int> n_trees{50, 100, 200, 500, 700, 1000};
  std::vector<int> min_samples_split{2, 5, 10};
  std::vector<int> min_samples_leaf{1, 20, 50, 80, 100, 150, 200, 300, 500};
  MaxFeatures max_features = MaxFeatures::sqrt;

  std::vector<ForestParams> expand(std::uint64_t seed) const {
    return make_forest_grid(n_trees, min_samples_split, min_samples_leaf, max_features, seed);
  }
};

struct ExperimentConfig {
  DatasetManifest dataset;
  std::vector<MeasureKind> proximities{MeasureKind::original, MeasureKind::oob, MeasureKind::rfgap};
  AlphaGrid alpha_grid;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  int cv_folds = 5;
  double train_fraction = 0.8;
  ForestGridSpec forest_grid;
  TrainConfig gcn;
  std::vector<std::pair<int, int>> mlp_hidden{{64, 128}, {128, 256}};
  TrainConfig mlp;
  double rbf_gamma = kDefaultRbfGamma;
  bool strict_cv = false;
  Storage storage = Storage::automatic;
  std::filesystem::path output_dir = "out";
};

/// Rows above which dense proximity storage is refused.
inline constexpr std::size_t kMaxDenseRows = 60000;

namespace detail {
inline std::string storage_name(Storage s) {
  return s == Storage::dense ? "dense" : s == Storage::sparse ? "sparse" : "automatic";
}
inline Storage storage_from_string(const std::string& s) {
  if (s == "dense") return Storage::dense;
  if (s == "sparse") return Storage::sparse;
  if (s == "automatic") return Storage::automatic;
  throw PreconditionError("unknown storage mode '" + s + "'");
}
}  // namespace detail

/// Parses a config object. Relative paths resolve against `base_dir`; the
/// "dataset" entry is either an inline manifest or a path to one.
inline ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  if (!j.contains("dataset")) throw PreconditionError("config: missing 'dataset'");
  const auto& ds = j.at("dataset");
  if (ds.is_string()) {
    std::filesystem::path p = ds.get<std::string>();
    c.dataset = load_manifest(p.is_relative() ? base_dir / p : p);
  } else {
    c.dataset = manifest_from_json(ds, base_dir);
  }
  if (j.contains("proximities")) {
    c.proximities.clear();
    for (const auto& k : j.at("proximities")) c.proximities.push_back(measure_from_string(k.get<std::string>()));
  }
  if (j.contains("alpha_grid")) {
    const auto& a = j.at("alpha_grid");
    c.alpha_grid.count = a.value("count", c.alpha_grid.count);
    c.alpha_grid.min = a.value("min", c.alpha_grid.min);
    c.alpha_grid.max = a.value("max", c.alpha_grid.max);
  }
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  c.cv_folds = j.value("cv_folds", c.cv_folds);
  c.train_fraction = j.value("train_fraction", c.train_fraction);
  if (j.contains("forest_grid")) {
    const auto& g = j.at("forest_grid");
    if (g.contains("n_trees")) c.forest_grid.n_trees = g.at("n_trees").get<std::vector<int>>();
    if (g.contains("min_samples_split")) {
      c.forest_grid.min_samples_split = g.at("min_samples_split").get<std::vector<int>>();
    }
    if (g.contains("min_samples_leaf")) {
      c.forest_grid.min_samples_leaf = g.at("min_samples_leaf").get<std::vector<int>>();
    }
    c.forest_grid.max_features = max_features_from_string(g.value("max_features", std::string("sqrt")));
  }
  if (j.contains("gcn")) c.gcn = train_config_from_json(j.at("gcn"));
  if (j.contains("mlp")) {
    const auto& m = j.at("mlp");
    c.mlp = train_config_from_json(m);
    if (m.contains("hidden_choices")) {
      c.mlp_hidden.clear();
      for (const auto& h : m.at("hidden_choices")) c.mlp_hidden.emplace_back(h.at(0).get<int>(), h.at(1).get<int>());
    }
  }
  c.rbf_gamma = j.value("rbf_gamma", c.rbf_gamma);
  c.strict_cv = j.value("strict_cv", c.strict_cv);
  c.storage = detail::storage_from_string(j.value("storage", std::string("automatic")));
  if (j.contains("output_dir")) {
    std::filesystem::path out = j.at("output_dir").get<std::string>();
    c.output_dir = out.is_relative() ? base_dir / out : out;
  }
  if (c.proximities.empty()) throw PreconditionError("config: proximities must not be empty");
  if (c.seeds.empty()) throw PreconditionError("config: seeds must not be empty");
  if (c.cv_folds < 2) throw PreconditionError("config: cv_folds must be >= 2");
  if (!(c.alpha_grid.min >= 0.0 && c.alpha_grid.max <= 1.0 && c.alpha_grid.min <= c.alpha_grid.max)) {
    throw PreconditionError("config: alpha_grid must lie within [0, 1]");
  }
  if (c.mlp_hidden.empty()) throw PreconditionError("config: mlp hidden_choices must not be empty");
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PreconditionError("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw PreconditionError("invalid config JSON: " + std::string(e.what()));
  }
  return config_from_json(j, path.parent_path());
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  std::vector<std::string> kinds;
  for (auto k : c.proximities) kinds.push_back(to_string(k));
  nlohmann::json mlp = to_json(c.mlp);
  nlohmann::json choices = nlohmann::json::array();
  for (auto [a, b] : c.mlp_hidden) choices.push_back({a, b});
  mlp["hidden_choices"] = choices;
  return {{"dataset",
           {{"csv_path", c.dataset.csv_path.generic_string()},
            {"label_column", c.dataset.label_column},
            {"categorical_columns", c.dataset.categorical_columns}}},
          {"proximities", kinds},
          {"alpha_grid", {{"count", c.alpha_grid.count}, {"min", c.alpha_grid.min}, {"max", c.alpha_grid.max}}},
          {"seeds", c.seeds},
          {"cv_folds", c.cv_folds},
          {"train_fraction", c.train_fraction},
          {"forest_grid",
           {{"n_trees", c.forest_grid.n_trees},
            {"min_samples_split", c.forest_grid.min_samples_split},
            {"min_samples_leaf", c.forest_grid.min_samples_leaf},
            {"max_features", to_string(c.forest_grid.max_features)}}},
          {"gcn", to_json(c.gcn)},
          {"mlp", mlp},
          {"rbf_gamma", c.rbf_gamma},
          {"strict_cv", c.strict_cv},
          {"storage", detail::storage_name(c.storage)},
          {"output_dir", c.output_dir.generic_string()}};
}

// Pipeline ------------------------------------------------------------------

/// Called with every graph right before a GCN is trained on it; `phase` is
/// "cv" for fold training and "final" for training on all train labels.
using TrainingObserver = std::function<void(const GraphData&, std::string_view phase)>;

struct CandidateScore {
  MeasureKind kind = MeasureKind::original;
  double alpha = 0.0;
  std::size_t edge_count = 0;
  double cv_f1 = 0.0;
  double test_f1 = 0.0;
};

struct SeedResult {
  std::uint64_t seed = 0;
  SplitIndices split;
  ForestParams forest;
  double forest_cv_f1 = 0.0;
  CandidateScore selected;
  double test_f1 = 0.0;
  std::vector<int> test_predictions;
  std::vector<CandidateScore> candidates;
  TrainResult final_model;
  std::map<std::string, double> seconds;
};

namespace detail {

template <typename F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

inline void check_size(const ExperimentConfig& config, std::size_t n_rows) {
  if (n_rows > kMaxDenseRows && config.storage != Storage::sparse) {
    throw PreconditionError("dataset has " + std::to_string(n_rows) + " rows; dense proximity storage is limited to " +
                            std::to_string(kMaxDenseRows) + " rows, set \"storage\": \"sparse\"");
  }
}

// Everything fixed for one seed before graphs are built.
struct SeedContext {
  const ExperimentConfig* config = nullptr;
  const TabularDataset* dataset = nullptr;
  std::uint64_t seed = 0;
  SplitIndices split;
  FeatureMatrix features;
  std::vector<int> fold_of_train;  // fold id per position in split.train
  TrainConfig gcn;
  TrainingObserver observer;
};

inline SeedContext make_context(const ExperimentConfig& config, const TabularDataset& ds, const SplitIndices& split,
                                std::uint64_t seed, TrainingObserver observer) {
  SeedContext ctx;
  ctx.config = &config;
  ctx.dataset = &ds;
  ctx.seed = seed;
  ctx.split = split;
  ctx.features = stage("encode", [&] { return encode(ds, split.train); });
  ctx.fold_of_train = stage("split", [&] {
    return stratified_folds(gather(ds.labels, split.train), ds.n_classes(), config.cv_folds, seed);
  });
  ctx.gcn = config.gcn;
  ctx.gcn.seed = seed;
  ctx.observer = std::move(observer);
  return ctx;
}

inline std::vector<int> fold_rows(const SeedContext& ctx, int fold, bool held_out) {
  std::vector<int> out;
  for (std::size_t p = 0; p < ctx.split.train.size(); ++p) {
    if ((ctx.fold_of_train[p] == fold) == held_out) out.push_back(ctx.split.train[p]);
  }
  return out;
}

struct FittedForest {
  GridSearchResult search;
  RandomForest forest;
  LeafIndexMatrix leaves;
};

inline FittedForest fit_selected_forest(const SeedContext& ctx) {
  return stage("forest", [&] {
    FittedForest f;
    const auto X_train = gather_rows(ctx.features.values, ctx.split.train);
    const auto y_train = gather(ctx.dataset->labels, ctx.split.train);
    f.search = grid_search(X_train, y_train, ctx.dataset->n_classes(), ctx.config->forest_grid.expand(ctx.seed),
                           ctx.config->cv_folds, ctx.seed);
    f.forest = fit_forest(X_train, y_train, ctx.dataset->n_classes(), f.search.best);
    f.leaves = apply(f.forest, ctx.features.values);
    return f;
  });
}

inline std::vector<int> train_and_predict(const SeedContext& ctx, const GraphData& graph, std::string_view phase) {
  if (ctx.observer) ctx.observer(graph, phase);
  const auto trained = train(graph, ctx.gcn);
  return predict(graph, trained.model);
}

inline GraphData graph_for(const SeedContext& ctx, Adjacency adj) {
  return assemble_graph(std::move(adj), ctx.features.values, ctx.dataset->labels, ctx.dataset->n_classes(),
                        ctx.split.train);
}

inline double score_on(const SeedContext& ctx, const std::vector<int>& pred, const std::vector<int>& rows) {
  return weighted_f1(gather(ctx.dataset->labels, rows), gather(pred, rows), ctx.dataset->n_classes());
}

// Graph source for each CV fold: the shared matrix, or in strict mode one
// rebuilt from a forest fitted on the fold's training part.
struct FoldMatrices {
  const ProximityMatrix* shared = nullptr;
  std::vector<ProximityMatrix> per_fold;

  const ProximityMatrix& at(int fold) const { return per_fold.empty() ? *shared : per_fold[fold]; }
};

inline FoldMatrices fold_matrices(const SeedContext& ctx, MeasureKind kind, const ProximityMatrix& shared,
                                  const ForestParams* forest_params) {
  FoldMatrices fm;
  fm.shared = &shared;
  if (!ctx.config->strict_cv || !is_forest_measure(kind) || forest_params == nullptr) return fm;
  for (int f = 0; f < ctx.config->cv_folds; ++f) {
    const auto fit_rows = fold_rows(ctx, f, false);
    const auto forest = fit_forest(gather_rows(ctx.features.values, fit_rows), gather(ctx.dataset->labels, fit_rows),
                                   ctx.dataset->n_classes(), *forest_params);
    const auto leaves = apply(forest, ctx.features.values);
    fm.per_fold.push_back(graph_proximity(kind, forest, leaves, fit_rows, ctx.config->storage));
  }
  return fm;
}

// CV and test weighted F1 for every threshold of one measure. Because edge
// sets are nested in alpha, an unchanged edge count means an unchanged graph,
// and the previous (deterministic) score is reused.
inline std::vector<CandidateScore> score_measure(const SeedContext& ctx, MeasureKind kind,
                                                 const ProximityMatrix& shared, const FoldMatrices& folds,
                                                 bool with_cv) {
  const int k = ctx.config->cv_folds;
  std::vector<std::vector<int>> fit(k), held(k);
  for (int f = 0; f < k; ++f) {
    fit[f] = fold_rows(ctx, f, false);
    held[f] = fold_rows(ctx, f, true);
  }
  std::vector<long long> last_count(k, -1);
  std::vector<double> last_score(k, 0.0);
  long long last_test_count = -1;
  double last_test = 0.0;

  std::vector<CandidateScore> out;
  for (double alpha : ctx.config->alpha_grid.values()) {
    CandidateScore cand;
    cand.kind = kind;
    cand.alpha = alpha;
    if (with_cv) {
      double sum = 0.0;
      int used = 0;
      for (int f = 0; f < k; ++f) {
        if (held[f].empty()) continue;
        auto adj = threshold_adjacency(folds.at(f), alpha);
        const auto count = static_cast<long long>(adj.edge_count());
        if (count != last_count[f]) {
          const auto graph = restrict_training(graph_for(ctx, std::move(adj)), fit[f]);
          last_score[f] = score_on(ctx, train_and_predict(ctx, graph, "cv"), held[f]);
          last_count[f] = count;
        }
        sum += last_score[f];
        ++used;
      }
      cand.cv_f1 = used ? sum / used : 0.0;
    }
    auto adj = threshold_adjacency(shared, alpha);
    cand.edge_count = adj.edge_count();
    if (static_cast<long long>(cand.edge_count) != last_test_count) {
      const auto graph = graph_for(ctx, std::move(adj));
      last_test = score_on(ctx, train_and_predict(ctx, graph, "final"), ctx.split.test);
      last_test_count = static_cast<long long>(cand.edge_count);
    }
    cand.test_f1 = last_test;
    out.push_back(cand);
  }
  return out;
}

inline int kind_rank(MeasureKind k) {
  switch (k) {
    case MeasureKind::original: return 0;
    case MeasureKind::rfgap: return 1;
    case MeasureKind::oob: return 2;
    case MeasureKind::cosine: return 3;
    case MeasureKind::jaccard: return 4;
    case MeasureKind::rbf: return 5;
  }
  return 6;
}

// Highest CV F1; ties prefer the higher alpha, then original < rfgap < oob.
inline bool better_candidate(const CandidateScore& a, const CandidateScore& b) {
  if (a.cv_f1 != b.cv_f1) return a.cv_f1 > b.cv_f1;
  if (a.alpha != b.alpha) return a.alpha > b.alpha;
  return kind_rank(a.kind) < kind_rank(b.kind);
}

inline const CandidateScore& select_best(const std::vector<CandidateScore>& candidates) {
  if (candidates.empty()) throw PreconditionError("no candidates to select from");
  const CandidateScore* best = &candidates.front();
  for (const auto& c : candidates) {
    if (better_candidate(c, *best)) best = &c;
  }
  return *best;
}

}  // namespace detail

/// One seed of the full pipeline on a fixed split: forest selection and
/// fit on train rows, proximities over all rows, CV selection of
/// (proximity, alpha) on train nodes, then the final GCN scored on test rows.
inline SeedResult run_rfgnn(const ExperimentConfig& config, const TabularDataset& ds, const SplitIndices& split,
                            std::uint64_t seed, TrainingObserver observer = {}) {
  detail::check_size(config, ds.n_rows());
  detail::Stopwatch clock;
  SeedResult r;
  r.seed = seed;
  r.split = split;
  const auto ctx = detail::make_context(config, ds, split, seed, std::move(observer));
  r.seconds["encode"] = clock.lap();

  const auto fitted = detail::fit_selected_forest(ctx);
  r.forest = fitted.search.best;
  r.forest_cv_f1 = fitted.search.mean_scores[fitted.search.best_index];
  r.seconds["forest"] = clock.lap();

  for (auto kind : config.proximities) {
    const auto P = detail::stage("proximity", [&] {
      return graph_proximity(kind, fitted.forest, fitted.leaves, split.train, config.storage);
    });
    r.seconds["proximity"] += clock.lap();
    const auto folds = detail::stage("proximity", [&] { return detail::fold_matrices(ctx, kind, P, &r.forest); });
    auto scores = detail::stage("gcn", [&] { return detail::score_measure(ctx, kind, P, folds, true); });
    r.candidates.insert(r.candidates.end(), scores.begin(), scores.end());
    r.seconds["gcn"] += clock.lap();
  }

  r.selected = detail::stage("select", [&] { return detail::select_best(r.candidates); });
  detail::stage("final", [&] {
    const auto P = graph_proximity(r.selected.kind, fitted.forest, fitted.leaves, split.train, config.storage);
    const auto graph = detail::graph_for(ctx, threshold_adjacency(P, r.selected.alpha));
    if (ctx.observer) ctx.observer(graph, "final");
    r.final_model = train(graph, ctx.gcn);
    const auto pred = predict(graph, r.final_model.model);
    r.test_predictions = gather(pred, split.test);
    r.test_f1 = detail::score_on(ctx, pred, split.test);
    return 0;
  });
  r.seconds["final"] = clock.lap();
  return r;
}

inline SplitIndices split_for_seed(const ExperimentConfig& config, const TabularDataset& ds, std::uint64_t seed) {
  return detail::stage("split", [&] { return stratified_split(ds, config.train_fraction, seed); });
}

inline SeedResult run_rfgnn(const ExperimentConfig& config, const TabularDataset& ds, std::uint64_t seed,
                            TrainingObserver observer = {}) {
  return run_rfgnn(config, ds, split_for_seed(config, ds, seed), seed, std::move(observer));
}

inline TabularDataset load_config_dataset(const ExperimentConfig& config) {
  return detail::stage("load", [&] { return load_dataset(config.dataset); });
}

struct ExperimentReport {
  std::vector<SeedResult> runs;
  MeanStd test_f1;
};

inline ExperimentReport run_experiment(const ExperimentConfig& config, const TabularDataset& ds,
                                       TrainingObserver observer = {}) {
  ExperimentReport report;
  std::vector<double> scores;
  for (auto seed : config.seeds) {
    report.runs.push_back(run_rfgnn(config, ds, seed, observer));
    scores.push_back(report.runs.back().test_f1);
  }
  report.test_f1 = aggregate_seeds(scores);
  return report;
}

inline nlohmann::json to_json(const CandidateScore& c) {
  return {{"proximity", to_string(c.kind)},
          {"alpha", c.alpha},
          {"edge_count", c.edge_count},
          {"cv_f1", c.cv_f1},
          {"test_f1", c.test_f1}};
}

/// Everything except wall-clock timings, so reruns serialize identically.
inline nlohmann::json to_json(const ExperimentReport& report, const ExperimentConfig& config,
                              const TabularDataset& ds) {
  nlohmann::json runs = nlohmann::json::array();
  std::vector<double> per_seed;
  for (const auto& r : report.runs) {
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& c : r.candidates) cands.push_back(to_json(c));
    runs.push_back({{"seed", r.seed},
                    {"n_train", r.split.train.size()},
                    {"n_test", r.split.test.size()},
                    {"forest", to_json(r.forest)},
                    {"forest_cv_f1", r.forest_cv_f1},
                    {"selected", to_json(r.selected)},
                    {"test_f1", r.test_f1},
                    {"test_predictions", r.test_predictions},
                    {"candidates", cands}});
    per_seed.push_back(r.test_f1);
  }
  int d = 0;
  for (const auto& col : ds.columns) d += col.kind == ColumnKind::numeric ? 1 : static_cast<int>(col.vocabulary.size());
  return {{"format", "rfgnn-report"},
          {"version", 1},
          {"config", to_json(config)},
          {"dataset", {{"n_rows", ds.n_rows()}, {"n_encoded_features", d}, {"n_classes", ds.n_classes()}}},
          {"runs", runs},
          {"summary", {{"test_f1_per_seed", per_seed}, {"test_f1_mean", report.test_f1.mean},
                       {"test_f1_std", report.test_f1.std}}}};
}

// Threshold sweep -------------------------------------------------------------

struct SweepRow {
  double alpha = 0.0;
  MeanStd f1;
  double mean_edge_count = 0.0;
  std::vector<double> per_seed_f1;
  std::vector<std::size_t> per_seed_edges;
};

/// Test F1 at every threshold (no selection), aggregated over seeds.
inline std::vector<SweepRow> threshold_sweep(const ExperimentConfig& config, const TabularDataset& ds,
                                             MeasureKind kind, TrainingObserver observer = {}) {
  detail::check_size(config, ds.n_rows());
  const auto alphas = config.alpha_grid.values();
  std::vector<SweepRow> rows(alphas.size());
  for (std::size_t a = 0; a < alphas.size(); ++a) rows[a].alpha = alphas[a];
  for (auto seed : config.seeds) {
    const auto split = split_for_seed(config, ds, seed);
    const auto ctx = detail::make_context(config, ds, split, seed, observer);
    ProximityMatrix P;
    if (is_forest_measure(kind)) {
      const auto fitted = detail::fit_selected_forest(ctx);
      P = detail::stage("proximity",
                        [&] { return graph_proximity(kind, fitted.forest, fitted.leaves, split.train, config.storage); });
    } else {
      P = detail::stage("proximity", [&] { return feature_similarity(kind, ctx.features.values, config.rbf_gamma); });
    }
    const auto scores = detail::stage("gcn", [&] { return detail::score_measure(ctx, kind, P, {&P, {}}, false); });
    for (std::size_t a = 0; a < alphas.size(); ++a) {
      rows[a].per_seed_f1.push_back(scores[a].test_f1);
      rows[a].per_seed_edges.push_back(scores[a].edge_count);
    }
  }
  for (auto& row : rows) {
    row.f1 = aggregate_seeds(row.per_seed_f1);
    double sum = 0.0;
    for (auto e : row.per_seed_edges) sum += static_cast<double>(e);
    row.mean_edge_count = sum / static_cast<double>(row.per_seed_edges.size());
  }
  return rows;
}

// Similarity comparison ---------------------------------------------------------

struct CompareRow {
  MeasureKind kind = MeasureKind::original;
  MeanStd f1;
  std::vector<double> per_seed_f1;
  std::vector<double> per_seed_alpha;
};

inline const std::vector<MeasureKind>& comparison_measures() {
  static const std::vector<MeasureKind> all{MeasureKind::original, MeasureKind::oob,     MeasureKind::rfgap,
                                            MeasureKind::cosine,   MeasureKind::jaccard, MeasureKind::rbf};
  return all;
}

/// The same split, forest, folds and threshold selection for every measure;
/// only the similarity matrix changes.
inline std::vector<CompareRow> compare_similarities(const ExperimentConfig& config, const TabularDataset& ds,
                                                    const std::vector<MeasureKind>& measures = comparison_measures(),
                                                    TrainingObserver observer = {}) {
  detail::check_size(config, ds.n_rows());
  std::vector<CompareRow> rows(measures.size());
  for (std::size_t m = 0; m < measures.size(); ++m) rows[m].kind = measures[m];
  for (auto seed : config.seeds) {
    const auto split = split_for_seed(config, ds, seed);
    const auto ctx = detail::make_context(config, ds, split, seed, observer);
    std::optional<detail::FittedForest> fitted;
    for (std::size_t m = 0; m < measures.size(); ++m) {
      const auto kind = measures[m];
      ProximityMatrix P;
      if (is_forest_measure(kind)) {
        if (!fitted) fitted = detail::fit_selected_forest(ctx);
        P = detail::stage("proximity", [&] {
          return graph_proximity(kind, fitted->forest, fitted->leaves, split.train, config.storage);
        });
      } else {
        P = detail::stage("proximity",
                          [&] { return feature_similarity(kind, ctx.features.values, config.rbf_gamma); });
      }
      const auto folds = detail::stage("proximity", [&] {
        return detail::fold_matrices(ctx, kind, P, fitted ? &fitted->search.best : nullptr);
      });
      const auto scores = detail::stage("gcn", [&] { return detail::score_measure(ctx, kind, P, folds, true); });
      const auto& best = detail::select_best(scores);
      rows[m].per_seed_f1.push_back(best.test_f1);
      rows[m].per_seed_alpha.push_back(best.alpha);
    }
  }
  for (auto& row : rows) row.f1 = aggregate_seeds(row.per_seed_f1);
  return rows;
}

// Baselines ---------------------------------------------------------------------

struct BaselineRow {
  std::string model;
  MeanStd f1;
  std::vector<double> per_seed_f1;
};

/// Random forest (grid-searched) and feed-forward network (hidden widths
/// chosen by CV on train rows) on the same splits as the pipeline.
inline std::vector<BaselineRow> run_baselines(const ExperimentConfig& config, const TabularDataset& ds) {
  BaselineRow rf{"random_forest", {}, {}};
  BaselineRow mlp{"mlp", {}, {}};
  for (auto seed : config.seeds) {
    const auto split = split_for_seed(config, ds, seed);
    const auto ctx = detail::make_context(config, ds, split, seed, {});
    const auto fitted = detail::fit_selected_forest(ctx);
    const auto rf_pred = predict(fitted.forest, gather_rows(ctx.features.values, split.test));
    rf.per_seed_f1.push_back(weighted_f1(gather(ds.labels, split.test), rf_pred, ds.n_classes()));

    detail::stage("mlp", [&] {
      TrainConfig mc = config.mlp;
      mc.seed = seed;
      std::size_t best = 0;
      double best_score = -1.0;
      if (config.mlp_hidden.size() > 1) {
        for (std::size_t h = 0; h < config.mlp_hidden.size(); ++h) {
          double sum = 0.0;
          for (int f = 0; f < config.cv_folds; ++f) {
            const auto fit = detail::fold_rows(ctx, f, false);
            const auto held = detail::fold_rows(ctx, f, true);
            const auto pred =
                mlp_baseline_predict(ctx.features.values, ds.labels, ds.n_classes(), fit, config.mlp_hidden[h], mc);
            sum += detail::score_on(ctx, pred, held);
          }
          if (sum / config.cv_folds > best_score) {
            best_score = sum / config.cv_folds;
            best = h;
          }
        }
      }
      const auto pred = mlp_baseline_predict(ctx.features.values, ds.labels, ds.n_classes(), split.train,
                                             config.mlp_hidden[best], mc);
      mlp.per_seed_f1.push_back(detail::score_on(ctx, pred, split.test));
      return 0;
    });
  }
  rf.f1 = aggregate_seeds(rf.per_seed_f1);
  mlp.f1 = aggregate_seeds(mlp.per_seed_f1);
  return {rf, mlp};
}

// CSV writers -------------------------------------------------------------------

inline std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
  out << "alpha,mean_f1,std_f1,edge_count\n";
  for (const auto& r : rows) {
    out << format_real(r.alpha) << ',' << fixed3(r.f1.mean) << ',' << fixed3(r.f1.std) << ','
        << format_real(r.mean_edge_count) << '\n';
  }
}

inline void write_compare_csv(const std::vector<CompareRow>& rows, std::ostream& out) {
  out << "measure,mean_f1,std_f1\n";
  for (const auto& r : rows) out << to_string(r.kind) << ',' << fixed3(r.f1.mean) << ',' << fixed3(r.f1.std) << '\n';
}

inline void write_baseline_csv(const std::vector<BaselineRow>& rows, std::ostream& out) {
  out << "model,mean_f1,std_f1\n";
  for (const auto& r : rows) out << r.model << ',' << fixed3(r.f1.mean) << ',' << fixed3(r.f1.std) << '\n';
}

}  // namespace rfgnn
