// Command-line front end for the RF-GNN pipeline.
//
//   rfgnn run          --config cfg.json [--seed S] [--alpha A] [--proximity K] [--out DIR]
//   rfgnn sweep        --config cfg.json [--proximity K] ...
//   rfgnn compare      --config cfg.json ...
//   rfgnn baseline     --config cfg.json ...
//   rfgnn export-graph --config cfg.json --alpha A [--proximity K] [--seed S]
//   rfgnn make-blobs   --out data.csv [--rows N] [--classes C] ...

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "rfgnn/rfgnn.hpp"

namespace fs = std::filesystem;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::optional<std::string> proximity;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Run a single seed instead of the configured list");
  cmd->add_option("--alpha", o.alpha, "Use a single proximity threshold")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--proximity", o.proximity, "original | oob | rfgap (| cosine | jaccard | rbf for sweep)");
  cmd->add_option("--out", o.out, "Output directory");
}

rfgnn::ExperimentConfig resolve(const Overrides& o) {
  auto config = rfgnn::detail::stage("config", [&] { return rfgnn::load_config(o.config); });
  if (o.seed) config.seeds = {*o.seed};
  if (o.alpha) config.alpha_grid = {1, *o.alpha, *o.alpha};
  if (o.proximity) {
    config.proximities = {rfgnn::detail::stage("config", [&] { return rfgnn::measure_from_string(*o.proximity); })};
  }
  if (o.out) config.output_dir = *o.out;
  fs::create_directories(config.output_dir);
  return config;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw rfgnn::StageError("output", "cannot write '" + path.string() + "'");
  return out;
}

int cmd_run(const Overrides& o) {
  const auto config = resolve(o);
  const auto ds = rfgnn::load_config_dataset(config);
  const auto report = rfgnn::run_experiment(config, ds);
  open_out(config.output_dir / "report.json") << rfgnn::to_json(report, config, ds).dump(2) << '\n';

  nlohmann::json timings = nlohmann::json::array();
  for (const auto& r : report.runs) {
    timings.push_back({{"seed", r.seed}, {"seconds", r.seconds}});
    const std::string tag = "seed" + std::to_string(r.seed);
    auto gcn = config.gcn;
    gcn.seed = r.seed;
    open_out(config.output_dir / ("model_" + tag + ".json")) << rfgnn::checkpoint_json(r.final_model.model, gcn).dump()
                                                             << '\n';
    auto trace = open_out(config.output_dir / ("loss_" + tag + ".csv"));
    rfgnn::write_loss_trace(r.final_model.loss_trace, trace);
    std::printf("seed %llu: %s alpha=%.2f cv_f1=%.3f test_f1=%.3f\n", static_cast<unsigned long long>(r.seed),
                rfgnn::to_string(r.selected.kind).c_str(), r.selected.alpha, r.selected.cv_f1, r.test_f1);
  }
  open_out(config.output_dir / "timings.json") << timings.dump(2) << '\n';
  std::printf("test weighted F1: %.3f +- %.3f\n", report.test_f1.mean, report.test_f1.std);
  return 0;
}

int cmd_sweep(const Overrides& o) {
  const auto config = resolve(o);
  const auto ds = rfgnn::load_config_dataset(config);
  const auto rows = rfgnn::threshold_sweep(config, ds, config.proximities.front());
  auto out = open_out(config.output_dir / "sweep.csv");
  rfgnn::write_sweep_csv(rows, out);
  rfgnn::write_sweep_csv(rows, std::cout);
  return 0;
}

int cmd_compare(const Overrides& o) {
  const auto config = resolve(o);
  const auto ds = rfgnn::load_config_dataset(config);
  const auto rows = rfgnn::compare_similarities(config, ds);
  auto out = open_out(config.output_dir / "compare.csv");
  rfgnn::write_compare_csv(rows, out);
  rfgnn::write_compare_csv(rows, std::cout);
  return 0;
}

int cmd_baseline(const Overrides& o) {
  const auto config = resolve(o);
  const auto ds = rfgnn::load_config_dataset(config);
  const auto rows = rfgnn::run_baselines(config, ds);
  auto out = open_out(config.output_dir / "baseline.csv");
  rfgnn::write_baseline_csv(rows, out);
  rfgnn::write_baseline_csv(rows, std::cout);
  return 0;
}

int cmd_export(const Overrides& o) {
  if (!o.alpha) throw rfgnn::StageError("config", "export-graph needs --alpha");
  const auto config = resolve(o);
  const auto ds = rfgnn::load_config_dataset(config);
  const auto seed = config.seeds.front();
  const auto kind = config.proximities.front();
  const auto split = rfgnn::split_for_seed(config, ds, seed);
  const auto features = rfgnn::detail::stage("encode", [&] { return rfgnn::encode(ds, split.train); });

  rfgnn::ProximityMatrix P;
  if (rfgnn::is_forest_measure(kind)) {
    const auto X_train = rfgnn::gather_rows(features.values, split.train);
    const auto y_train = rfgnn::gather(ds.labels, split.train);
    const auto forest = rfgnn::detail::stage("forest", [&] {
      const auto search = rfgnn::grid_search(X_train, y_train, ds.n_classes(), config.forest_grid.expand(seed),
                                             config.cv_folds, seed);
      return rfgnn::fit_forest(X_train, y_train, ds.n_classes(), search.best);
    });
    rfgnn::save_forest(forest, config.output_dir / "forest.json");
    P = rfgnn::detail::stage("proximity", [&] {
      return rfgnn::graph_proximity(kind, forest, rfgnn::apply(forest, features.values), split.train, config.storage);
    });
  } else {
    P = rfgnn::feature_similarity(kind, features.values, config.rbf_gamma);
  }
  auto triples = open_out(config.output_dir / "proximity.triples");
  rfgnn::write_triples(P, triples);
  const auto adj = rfgnn::threshold_adjacency(P, *o.alpha);
  auto edges = open_out(config.output_dir / "graph.edgelist");
  rfgnn::write_edge_list(adj, edges);
  std::printf("%zu nodes, %zu edges at alpha=%g (%s)\n", static_cast<std::size_t>(adj.n_nodes), adj.edge_count(),
              adj.alpha, rfgnn::to_string(kind).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random-forest proximity graphs + GCN node classification for tabular data"};
  app.require_subcommand(1);

  Overrides run_o, sweep_o, compare_o, baseline_o, export_o;
  auto* run = app.add_subcommand("run", "Full pipeline with CV selection of proximity and threshold");
  add_common(run, run_o);
  auto* sweep = app.add_subcommand("sweep", "Test F1 across the threshold grid for one proximity");
  add_common(sweep, sweep_o);
  auto* compare = app.add_subcommand("compare", "RF proximities vs cosine / Jaccard / RBF graphs");
  add_common(compare, compare_o);
  auto* baseline = app.add_subcommand("baseline", "Random forest and MLP baselines");
  add_common(baseline, baseline_o);
  auto* exporter = app.add_subcommand("export-graph", "Write the thresholded graph as an edge list");
  add_common(exporter, export_o);

  rfgnn::BlobSpec blobs;
  std::string blobs_out;
  auto* make_blobs = app.add_subcommand("make-blobs", "Write a Gaussian-blobs CSV (label column 'label')");
  make_blobs->add_option("--out", blobs_out, "CSV path")->required();
  make_blobs->add_option("--rows", blobs.n_rows);
  make_blobs->add_option("--classes", blobs.n_classes);
  make_blobs->add_option("--features", blobs.n_features);
  make_blobs->add_option("--separation", blobs.separation, "Centre-to-boundary distance in sigmas");
  make_blobs->add_option("--label-features", blobs.label_features);
  make_blobs->add_option("--seed", blobs.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "error [config] %s\n", e.what());
    return 2;
  }

  try {
    if (*run) return cmd_run(run_o);
    if (*sweep) return cmd_sweep(sweep_o);
    if (*compare) return cmd_compare(compare_o);
    if (*baseline) return cmd_baseline(baseline_o);
    if (*exporter) return cmd_export(export_o);
    if (*make_blobs) {
      rfgnn::write_csv(rfgnn::make_blobs(blobs), blobs_out);
      return 0;
    }
  } catch (const rfgnn::StageError& e) {
    std::fprintf(stderr, "error %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error [internal] %s\n", e.what());
    return 1;
  }
  return 0;
}
