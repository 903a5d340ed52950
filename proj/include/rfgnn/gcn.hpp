#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <json.hpp>

#include "rfgnn/error.hpp"
#include "rfgnn/graph_build.hpp"
#include "rfgnn/rng.hpp"

namespace rfgnn {

/// One graph convolution: h' = ReLU(W * mean_{j in N(i)} h_j + B * h_i).
/// Both matrices are out x in.
struct GcnLayer {
  Eigen::MatrixXd neighbor;  // W_l
  Eigen::MatrixXd self;      // B_l
};

/// Two-layer classifier applied to the final node embedding.
struct MlpHead {
  Eigen::MatrixXd w_in;   // h x k
  Eigen::VectorXd b_a;    // h
  Eigen::MatrixXd w_out;  // c x h
  Eigen::VectorXd b_o;    // c
};

struct GCNModel {
  std::vector<GcnLayer> layers;
  MlpHead head;

  int input_dim() const {
    return layers.empty() ? static_cast<int>(head.w_in.cols()) : static_cast<int>(layers.front().self.cols());
  }
  int embedding_dim() const { return static_cast<int>(head.w_in.cols()); }
  int n_classes() const { return static_cast<int>(head.w_out.rows()); }

  /// Zero-valued model with the same shapes.
  GCNModel zeros_like() const {
    GCNModel z;
    for (const auto& l : layers) {
      z.layers.push_back({Eigen::MatrixXd::Zero(l.neighbor.rows(), l.neighbor.cols()),
                          Eigen::MatrixXd::Zero(l.self.rows(), l.self.cols())});
    }
    z.head = {Eigen::MatrixXd::Zero(head.w_in.rows(), head.w_in.cols()), Eigen::VectorXd::Zero(head.b_a.size()),
              Eigen::MatrixXd::Zero(head.w_out.rows(), head.w_out.cols()), Eigen::VectorXd::Zero(head.b_o.size())};
    return z;
  }

  void validate() const {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& L = layers[l];
      if (L.neighbor.rows() != L.self.rows() || L.neighbor.cols() != L.self.cols()) {
        throw PreconditionError("GCNModel: W and B of layer " + std::to_string(l) + " differ in shape");
      }
      if (l > 0 && L.self.cols() != layers[l - 1].self.rows()) {
        throw PreconditionError("GCNModel: layer " + std::to_string(l) + " input does not chain");
      }
    }
    if (!layers.empty() && head.w_in.cols() != layers.back().self.rows()) {
      throw PreconditionError("GCNModel: head input differs from last layer output");
    }
    if (head.b_a.size() != head.w_in.rows() || head.w_out.cols() != head.w_in.rows() ||
        head.b_o.size() != head.w_out.rows()) {
      throw PreconditionError("GCNModel: inconsistent head shapes");
    }
  }
};

/// Calls f on corresponding parameter tensors of every model, in a fixed
/// order (layers first, then head).
template <typename F, typename First, typename... Rest>
void zip_parameters(F&& f, First& first, Rest&... rest) {
  for (std::size_t l = 0; l < first.layers.size(); ++l) {
    f(first.layers[l].neighbor, rest.layers[l].neighbor...);
    f(first.layers[l].self, rest.layers[l].self...);
  }
  f(first.head.w_in, rest.head.w_in...);
  f(first.head.b_a, rest.head.b_a...);
  f(first.head.w_out, rest.head.w_out...);
  f(first.head.b_o, rest.head.b_o...);
}

enum class OptimizerKind { gradient_descent, adam };

struct TrainConfig {
  double learning_rate = 0.01;
  int epochs = 200;
  std::vector<int> hidden_dims{64, 64};  // one entry per graph layer
  int head_hidden = 64;
  double weight_init_scale = 1.0;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double dropout = 0.0;
  double weight_decay = 0.0;

  int n_layers() const { return static_cast<int>(hidden_dims.size()); }

  void validate() const {
    if (!(learning_rate >= 0.0)) throw PreconditionError("TrainConfig: learning_rate must be >= 0");
    if (epochs < 1) throw PreconditionError("TrainConfig: epochs must be >= 1");
    if (head_hidden < 1) throw PreconditionError("TrainConfig: head_hidden must be >= 1");
    for (int h : hidden_dims) {
      if (h < 1) throw PreconditionError("TrainConfig: hidden dims must be positive");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw PreconditionError("TrainConfig: dropout must lie in [0, 1)");
  }
};

/// Weights uniform in +-scale/sqrt(fan_in); biases zero.
inline GCNModel init_model(int input_dim, int n_classes, const TrainConfig& config) {
  Rng rng(config.seed);
  auto uniform = [&](Eigen::Index rows, Eigen::Index cols) {
    const double bound = config.weight_init_scale / std::sqrt(static_cast<double>(cols));
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
    }
    return m;
  };
  GCNModel model;
  int in = input_dim;
  for (int out : config.hidden_dims) {
    GcnLayer layer;
    layer.neighbor = uniform(out, in);
    layer.self = uniform(out, in);
    model.layers.push_back(std::move(layer));
    in = out;
  }
  model.head.w_in = uniform(config.head_hidden, in);
  model.head.b_a = Eigen::VectorXd::Zero(config.head_hidden);
  model.head.w_out = uniform(n_classes, config.head_hidden);
  model.head.b_o = Eigen::VectorXd::Zero(n_classes);
  return model;
}

/// Row-stochastic neighbor averaging operator; isolated nodes get an
/// all-zero row, so their neighbor term vanishes.
inline SparseRowMatrix mean_aggregator(const Adjacency& a) {
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(2 * a.edge_count());
  for (int i = 0; i < a.n_nodes; ++i) {
    const auto& nb = a.neighbors[i];
    for (int j : nb) triplets.emplace_back(i, j, 1.0 / static_cast<double>(nb.size()));
  }
  SparseRowMatrix m(a.n_nodes, a.n_nodes);
  m.setFromTriplets(triplets.begin(), triplets.end());
  return m;
}

/// Intermediate values kept for the backward pass.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;      // h^(l) as fed to layer l (after dropout)
  std::vector<Eigen::MatrixXd> aggregated;  // mean of neighbor inputs
  std::vector<Eigen::MatrixXd> pre;         // pre-activation of layer l
  std::vector<Eigen::MatrixXd> dropout;     // scaled keep masks, empty when unused
  Eigen::MatrixXd embedding;                // h^(L) fed to the head
  Eigen::MatrixXd head_pre;
  Eigen::MatrixXd head_act;
  Eigen::MatrixXd logits;
};

namespace detail {

inline Eigen::MatrixXd relu(const Eigen::MatrixXd& m) { return m.cwiseMax(0.0); }

inline Eigen::MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  Eigen::MatrixXd mask(rows, cols);
  const double keep = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) mask(i, j) = rng.uniform() < rate ? 0.0 : keep;
  }
  return mask;
}

inline void forward_into(const SparseRowMatrix& agg, const Eigen::MatrixXd& features, const GCNModel& model,
                         ForwardCache& cache, double dropout = 0.0, Rng* rng = nullptr) {
  model.validate();
  if (features.cols() != model.input_dim()) {
    throw PreconditionError("gcn_forward: feature dim " + std::to_string(features.cols()) + " != model input " +
                            std::to_string(model.input_dim()));
  }
  cache = ForwardCache{};
  Eigen::MatrixXd h = features;
  for (const auto& layer : model.layers) {
    Eigen::MatrixXd aggregated = agg * h;
    Eigen::MatrixXd pre = aggregated * layer.neighbor.transpose() + h * layer.self.transpose();
    cache.inputs.push_back(std::move(h));
    cache.aggregated.push_back(std::move(aggregated));
    h = relu(pre);
    cache.pre.push_back(std::move(pre));
    if (dropout > 0.0 && rng) {
      cache.dropout.push_back(dropout_mask(h.rows(), h.cols(), dropout, *rng));
      h = h.cwiseProduct(cache.dropout.back());
    }
  }
  cache.embedding = std::move(h);
  cache.head_pre = (cache.embedding * model.head.w_in.transpose()).rowwise() + model.head.b_a.transpose();
  cache.head_act = relu(cache.head_pre);
  cache.logits = (cache.head_act * model.head.w_out.transpose()).rowwise() + model.head.b_o.transpose();
}

}  // namespace detail

/// Node embeddings after all graph layers.
inline Eigen::MatrixXd gcn_forward(const GraphData& graph, const GCNModel& model) {
  ForwardCache cache;
  detail::forward_into(mean_aggregator(graph.adjacency), graph.features, model, cache);
  return cache.embedding;
}

/// Logits W_out * ReLU(W_in * h + b_a) + b_o for every row of `embeddings`.
inline Eigen::MatrixXd head_forward(const Eigen::MatrixXd& embeddings, const GCNModel& model) {
  if (embeddings.cols() != model.embedding_dim()) throw PreconditionError("head_forward: embedding dim mismatch");
  const Eigen::MatrixXd act =
      ((embeddings * model.head.w_in.transpose()).rowwise() + model.head.b_a.transpose()).cwiseMax(0.0);
  return (act * model.head.w_out.transpose()).rowwise() + model.head.b_o.transpose();
}

inline Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Eigen::RowVectorXd shifted = logits.row(i).array() - logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = shifted.array().exp();
    p.row(i) = e / e.sum();
  }
  return p;
}

struct LossAndGrads {
  double loss = 0.0;
  GCNModel grads;
};

namespace detail {

// Mean cross-entropy over train nodes and its gradient with respect to every
// parameter, by reverse-mode differentiation through head and layers.
inline LossAndGrads backward(const SparseRowMatrix& agg, const GraphData& graph, const GCNModel& model,
                             const ForwardCache& cache) {
  const auto train = graph.train_nodes();
  if (train.empty()) throw PreconditionError("loss_and_grads: no training nodes");
  const double inv_n = 1.0 / static_cast<double>(train.size());

  LossAndGrads out;
  out.grads = model.zeros_like();
  Eigen::MatrixXd d_logits = Eigen::MatrixXd::Zero(cache.logits.rows(), cache.logits.cols());
  for (int i : train) {
    const int y = graph.labels[i];
    if (y < 0 || y >= model.n_classes()) throw PreconditionError("loss_and_grads: training node without a label");
    const auto row = cache.logits.row(i);
    const double peak = row.maxCoeff();
    const Eigen::RowVectorXd e = (row.array() - peak).exp();
    const double sum = e.sum();
    out.loss += (std::log(sum) + peak - row(y)) * inv_n;
    d_logits.row(i) = e / sum * inv_n;
    d_logits(i, y) -= inv_n;
  }

  auto& g = out.grads;
  g.head.w_out = d_logits.transpose() * cache.head_act;
  g.head.b_o = d_logits.colwise().sum().transpose();
  const Eigen::MatrixXd d_act = d_logits * model.head.w_out;
  const Eigen::MatrixXd d_head_pre = d_act.cwiseProduct((cache.head_pre.array() > 0.0).cast<double>().matrix());
  g.head.w_in = d_head_pre.transpose() * cache.embedding;
  g.head.b_a = d_head_pre.colwise().sum().transpose();
  Eigen::MatrixXd d_h = d_head_pre * model.head.w_in;

  const SparseRowMatrix agg_t = agg.transpose();
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    if (!cache.dropout.empty()) d_h = d_h.cwiseProduct(cache.dropout[l]);
    const Eigen::MatrixXd d_pre = d_h.cwiseProduct((cache.pre[l].array() > 0.0).cast<double>().matrix());
    g.layers[l].neighbor = d_pre.transpose() * cache.aggregated[l];
    g.layers[l].self = d_pre.transpose() * cache.inputs[l];
    if (l > 0) {
      d_h = agg_t * (d_pre * model.layers[l].neighbor) + d_pre * model.layers[l].self;
    }
  }
  return out;
}

}  // namespace detail

/// Mean softmax cross-entropy over the graph's training nodes and its exact
/// gradient.
inline LossAndGrads loss_and_grads(const GraphData& graph, const GCNModel& model) {
  const auto agg = mean_aggregator(graph.adjacency);
  ForwardCache cache;
  detail::forward_into(agg, graph.features, model, cache);
  return detail::backward(agg, graph, model, cache);
}

struct TrainResult {
  GCNModel model;
  std::vector<double> loss_trace;  // loss before the update of each epoch
};

/// Full-batch training for a fixed number of epochs.
inline TrainResult train(const GraphData& graph, const TrainConfig& config) {
  config.validate();
  TrainResult result;
  result.model = init_model(static_cast<int>(graph.features.cols()), graph.n_classes, config);
  const auto agg = mean_aggregator(graph.adjacency);
  GCNModel m1 = result.model.zeros_like();
  GCNModel m2 = result.model.zeros_like();
  Rng dropout_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  ForwardCache cache;
  double b1t = 1.0, b2t = 1.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    detail::forward_into(agg, graph.features, result.model, cache, config.dropout, &dropout_rng);
    auto lg = detail::backward(agg, graph, result.model, cache);
    if (!std::isfinite(lg.loss)) throw DivergenceError(epoch, lg.loss);
    result.loss_trace.push_back(lg.loss);
    if (config.weight_decay > 0.0) {
      for (std::size_t l = 0; l < result.model.layers.size(); ++l) {
        lg.grads.layers[l].neighbor += config.weight_decay * result.model.layers[l].neighbor;
        lg.grads.layers[l].self += config.weight_decay * result.model.layers[l].self;
      }
      lg.grads.head.w_in += config.weight_decay * result.model.head.w_in;
      lg.grads.head.w_out += config.weight_decay * result.model.head.w_out;
    }
    const double lr = config.learning_rate;
    if (config.optimizer == OptimizerKind::gradient_descent) {
      zip_parameters([&](auto& p, const auto& g) { p -= lr * g; }, result.model, lg.grads);
    } else {
      b1t *= config.beta1;
      b2t *= config.beta2;
      const double b1 = config.beta1, b2 = config.beta2, eps = config.epsilon;
      zip_parameters(
          [&](auto& p, const auto& g, auto& m, auto& v) {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
            p.array() -= lr * (m.array() / (1.0 - b1t)) / ((v.array() / (1.0 - b2t)).sqrt() + eps);
          },
          result.model, lg.grads, m1, m2);
    }
  }
  return result;
}

inline int argmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  int best = 0;
  for (Eigen::Index k = 1; k < row.size(); ++k) {
    if (row(k) > row(best)) best = static_cast<int>(k);
  }
  return best;
}

/// Class with the highest softmax probability per node; ties go to the
/// lowest class index.
inline std::vector<int> predict_labels(const Eigen::MatrixXd& logits) {
  const auto proba = softmax_rows(logits);
  std::vector<int> out(proba.rows());
  for (Eigen::Index i = 0; i < proba.rows(); ++i) out[i] = argmax_row(proba.row(i));
  return out;
}

inline std::vector<int> predict(const GraphData& graph, const GCNModel& model) {
  return predict_labels(head_forward(gcn_forward(graph, model), model));
}

/// Feed-forward baseline built from the same machinery on an edgeless
/// graph: hidden_dims (h1, h2) become one self-only layer of width h1 and a
/// head of width h2. Returns predictions for every row.
inline std::vector<int> mlp_baseline_predict(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                                             int n_classes, const std::vector<int>& train_rows,
                                             std::pair<int, int> hidden_dims, TrainConfig config) {
  config.hidden_dims = {hidden_dims.first};
  config.head_hidden = hidden_dims.second;
  const int n = static_cast<int>(features.rows());
  auto graph = assemble_graph(make_adjacency(n, {}, 0.0, MeasureKind::original), features, labels, n_classes,
                              train_rows);
  const auto trained = train(graph, config);
  return predict(graph, trained.model);
}

/// Test-row predictions of the feed-forward baseline.
inline std::vector<int> mlp_baseline_train_predict(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                                                   int n_classes, const SplitIndices& split,
                                                   std::pair<int, int> hidden_dims, const TrainConfig& config) {
  const auto all = mlp_baseline_predict(features, labels, n_classes, split.train, hidden_dims, config);
  return gather(all, split.test);
}

// Persistence ---------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"hidden_dims", c.hidden_dims},
          {"head_hidden", c.head_hidden},
          {"weight_init_scale", c.weight_init_scale},
          {"seed", c.seed},
          {"optimizer", c.optimizer == OptimizerKind::adam ? "adam" : "gradient_descent"},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"dropout", c.dropout},
          {"weight_decay", c.weight_decay}};
}

/// Missing keys keep their defaults. "n_layers" with a single hidden width
/// repeats that width.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  if (j.contains("hidden_dims")) {
    const auto& h = j.at("hidden_dims");
    c.hidden_dims = h.is_array() ? h.get<std::vector<int>>() : std::vector<int>{h.get<int>()};
  }
  if (j.contains("n_layers")) {
    const int L = j.at("n_layers");
    if (L < 0) throw PreconditionError("TrainConfig: n_layers must be >= 0");
    const int width = c.hidden_dims.empty() ? 64 : c.hidden_dims.front();
    if (static_cast<int>(c.hidden_dims.size()) != L) c.hidden_dims.assign(L, width);
  }
  c.head_hidden = j.value("head_hidden", c.head_hidden);
  c.weight_init_scale = j.value("weight_init_scale", c.weight_init_scale);
  c.seed = j.value("seed", c.seed);
  const std::string opt = j.value("optimizer", std::string(c.optimizer == OptimizerKind::adam ? "adam" : "gradient_descent"));
  if (opt == "adam") {
    c.optimizer = OptimizerKind::adam;
  } else if (opt == "gradient_descent" || opt == "sgd") {
    c.optimizer = OptimizerKind::gradient_descent;
  } else {
    throw PreconditionError("unknown optimizer '" + opt + "'");
  }
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.dropout = j.value("dropout", c.dropout);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.validate();
  return c;
}

namespace detail {
inline nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[j] = m(i, j);
    rows.push_back(r);
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  Eigen::MatrixXd m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
  const auto& data = j.at("data");
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) m(i, k) = data.at(i).at(k).get<double>();
  }
  return m;
}
}  // namespace detail

inline nlohmann::json checkpoint_json(const GCNModel& model, const TrainConfig& config) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : model.layers) {
    layers.push_back({{"neighbor", detail::matrix_json(l.neighbor)}, {"self", detail::matrix_json(l.self)}});
  }
  std::vector<int> hidden;
  for (const auto& l : model.layers) hidden.push_back(static_cast<int>(l.self.rows()));
  return {{"format", "rfgnn-gcn"},
          {"version", kCheckpointVersion},
          {"dims",
           {{"input", model.input_dim()},
            {"hidden", hidden},
            {"head_hidden", model.head.w_in.rows()},
            {"classes", model.n_classes()}}},
          {"config", to_json(config)},
          {"layers", layers},
          {"head",
           {{"w_in", detail::matrix_json(model.head.w_in)},
            {"b_a", detail::matrix_json(model.head.b_a)},
            {"w_out", detail::matrix_json(model.head.w_out)},
            {"b_o", detail::matrix_json(model.head.b_o)}}}};
}

inline GCNModel model_from_checkpoint(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "rfgnn-gcn") throw DataError("not a GCN checkpoint");
  if (j.at("version").get<int>() != kCheckpointVersion) throw DataError("unsupported checkpoint version");
  GCNModel m;
  for (const auto& l : j.at("layers")) {
    m.layers.push_back({detail::matrix_from_json(l.at("neighbor")), detail::matrix_from_json(l.at("self"))});
  }
  const auto& h = j.at("head");
  m.head.w_in = detail::matrix_from_json(h.at("w_in"));
  m.head.b_a = detail::matrix_from_json(h.at("b_a"));
  m.head.w_out = detail::matrix_from_json(h.at("w_out"));
  m.head.b_o = detail::matrix_from_json(h.at("b_o"));
  m.validate();
  return m;
}

inline void write_loss_trace(const std::vector<double>& trace, std::ostream& out) {
  out << "epoch,loss\n";
  for (std::size_t e = 0; e < trace.size(); ++e) out << e << ',' << format_real(trace[e]) << '\n';
}

}  // namespace rfgnn
