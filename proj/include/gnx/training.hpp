#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gnx/backward.hpp"
#include "gnx/gn.hpp"
#include "gnx/io.hpp"
#include "gnx/log.hpp"

namespace gnx {

struct LossGrad {
  double loss = 0.0;
  Tensor grad;  // same shape as the prediction
};

/// Mean binary cross-entropy over nodes, in the stable form
/// max(x,0) - x*y + log(1 + exp(-|x|)).
inline LossGrad bce_with_logits(const Tensor& logits, std::span<const int> labels) {
  if (logits.size() != labels.size())
    throw DimensionError("bce_with_logits: " + std::to_string(logits.size()) + " logits for " +
                         std::to_string(labels.size()) + " labels");
  LossGrad out{0.0, Tensor(logits.shape())};
  if (labels.empty()) return out;
  const double n = static_cast<double>(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double x = logits[i];
    const double y = labels[i] ? 1.0 : 0.0;
    out.loss += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
    const double sig = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    out.grad[i] = (sig - y) / n;
  }
  out.loss /= n;
  return out;
}

inline LossGrad mse(double pred, double target) {
  const double d = pred - target;
  return {d * d, Tensor({1, 1}, std::vector<double>{2.0 * d})};
}

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m, v;
  std::uint64_t step = 0;
};

/// Bias-corrected Adam update of every parameter in place.
inline void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, AdamState& state,
                      const AdamHyper& h) {
  if (params.size() != grads.size())
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters, " +
                         std::to_string(grads.size()) + " gradients");
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("adam_step: optimizer state does not match parameters");
  for (std::size_t k = 0; k < params.size(); ++k)
    if (params[k]->shape() != grads[k].shape() || state.m[k].shape() != grads[k].shape())
      throw DimensionError("adam_step: parameter " + std::to_string(k) + " is " + shape_str(params[k]->shape()) +
                           " but gradient is " + shape_str(grads[k].shape()));
  ++state.step;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  const double b1 = h.beta1, b2 = h.beta2, step = h.lr / c1, inv_c2 = 1.0 / c2, eps = h.eps;
  for (std::size_t k = 0; k < params.size(); ++k) {
    double* __restrict p = params[k]->data().data();
    const double* __restrict g = grads[k].data().data();
    double* __restrict m = state.m[k].data().data();
    double* __restrict v = state.v[k].data().data();
    const std::size_t n = grads[k].size();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      p[i] -= step * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
    }
  }
}

// --- configuration ----------------------------------------------------------

enum class Task { Infection, Solubility };

inline const char* to_string(Task t) { return t == Task::Infection ? "infection" : "solubility"; }

inline Task parse_task(const std::string& s) {
  if (s == "infection") return Task::Infection;
  if (s == "solubility") return Task::Solubility;
  throw DataError("unknown task '" + s + "'");
}

struct TrainConfig {
  Task task = Task::Infection;
  std::size_t epochs = 5;
  std::size_t batch_size = 1;
  double lr = 1e-3;
  double l1_weight = 0.0;
  double dropout = 0.0;
  Reduce pool = Reduce::Max;
  std::size_t layers = 1;
  std::size_t width = 16;
  std::uint64_t seed = 0;

  static TrainConfig infection() { return {}; }
  static TrainConfig solubility() {
    TrainConfig c;
    c.task = Task::Solubility;
    c.epochs = 100;
    c.lr = 1e-3;
    c.l1_weight = 1e-5;
    c.dropout = 0.1;
    c.pool = Reduce::Mean;
    c.layers = 4;
    c.width = 128;
    return c;
  }
};

inline void validate(const TrainConfig& c) {
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(c.l1_weight >= 0.0 && c.l1_weight < 1.0)) throw ConfigError("l1 weight must lie in [0, 1)");
  if (!(c.lr > 0.0 && c.lr < 1.0)) throw ConfigError("learning rate must lie in (0, 1)");
  if (c.layers == 0 || c.width == 0 || c.batch_size == 0) throw ConfigError("layers, width and batch size must be positive");
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"task", to_string(c.task)}, {"epochs", c.epochs}, {"batch_size", c.batch_size}, {"lr", c.lr},
          {"l1_weight", c.l1_weight}, {"dropout", c.dropout}, {"pool", to_string(c.pool)}, {"layers", c.layers},
          {"width", c.width}, {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.task = parse_task(j.at("task").get<std::string>());
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.lr = j.at("lr").get<double>();
  c.l1_weight = j.at("l1_weight").get<double>();
  c.dropout = j.at("dropout").get<double>();
  c.pool = parse_reduce(j.at("pool").get<std::string>());
  c.layers = j.at("layers").get<std::size_t>();
  c.width = j.at("width").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

/// Architecture implied by a task and the input feature sizes.
inline ModelSpec model_spec(const TrainConfig& c, std::size_t edge_in, std::size_t node_in, std::size_t global_in) {
  ModelSpec s;
  s.edge_in = edge_in;
  s.node_in = node_in;
  s.global_in = global_in;
  s.layers = c.layers;
  s.width = c.width;
  s.pool = c.pool;
  s.head = c.task == Task::Infection ? HeadKind::NodeLogit : HeadKind::GlobalScalar;
  s.global_update = c.task == Task::Solubility;
  return s;
}

// --- data and metrics -------------------------------------------------------

/// Graphs plus, for regression, one target per graph. Node labels live in Graph::labels.
struct Dataset {
  std::vector<Graph> graphs;
  std::vector<double> targets;

  std::size_t size() const { return graphs.size(); }
};

/// Shuffled index partition: the first `train` fraction, then `val`, then the rest.
struct Split {
  std::vector<std::size_t> train, val, test;
};

inline Split random_split(std::size_t n, std::uint64_t seed, double train = 0.8, double val = 0.1) {
  if (!(train >= 0.0 && val >= 0.0 && train + val <= 1.0)) throw ConfigError("split fractions must sum to at most 1");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = substream(seed, 99);
  shuffle(idx, rng);
  const auto n_train = static_cast<std::size_t>(std::floor(train * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::floor((train + val) * static_cast<double>(n))) - n_train;
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train),
               idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
  return s;
}

inline Dataset subset(const Dataset& d, const std::vector<std::size_t>& idx) {
  Dataset out;
  for (std::size_t i : idx) {
    out.graphs.push_back(d.graphs.at(i));
    if (!d.targets.empty()) out.targets.push_back(d.targets.at(i));
  }
  return out;
}

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;  // node accuracy or RMSE
  double seconds = 0.0;
};

struct Metrics {
  std::vector<EpochMetrics> epochs;
  std::size_t best_epoch = 0;
  double best_val_metric = 0.0;
  double wall_seconds = 0.0;
};

/// Fraction of nodes whose logit sign matches the label.
inline double node_accuracy(const GnModel& model, const std::vector<Graph>& graphs) {
  std::size_t right = 0, total = 0;
  for (const Graph& g : graphs) {
    if (!g.labels) throw DataError("node accuracy needs labelled graphs");
    const auto logits = predict(g, model);
    for (std::size_t i = 0; i < logits.size(); ++i) right += ((logits[i] > 0.0) == ((*g.labels)[i] != 0));
    total += logits.size();
  }
  return total ? static_cast<double>(right) / static_cast<double>(total) : 0.0;
}

inline double rmse(const GnModel& model, const Dataset& data) {
  if (data.targets.size() != data.graphs.size()) throw DataError("regression dataset needs one target per graph");
  double se = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double d = predict(data.graphs[i], model).front() - data.targets[i];
    se += d * d;
  }
  return data.size() ? std::sqrt(se / static_cast<double>(data.size())) : 0.0;
}

/// Loss of one graph and its gradient with respect to every model parameter.
struct StepResult {
  double loss = 0.0;
  std::vector<Tensor> grads;
};

inline StepResult loss_and_gradients(const GnModel& model, const Graph& g, double target, Task task,
                                     const ForwardOptions& opt = {}) {
  Tape tape;
  const ForwardTrace tr = gn_forward(tape, g, model, opt);
  const Tensor& out = tape.value(tr.output);
  LossGrad lg;
  if (task == Task::Infection) {
    if (!g.labels) throw DataError("infection training needs node labels");
    lg = bce_with_logits(out, *g.labels);
  } else {
    lg = mse(out[0], target);
  }
  const BackwardResult res = backward(tape, tr.output, lg.grad, Gradient{});
  StepResult s{lg.loss, {}};
  s.grads.reserve(tr.parameters.size());
  for (Var p : tr.parameters) s.grads.push_back(res.at(p));
  return s;
}

struct TrainResult {
  GnModel model;  // best validation checkpoint
  Metrics metrics;
};

/// Per-graph (or small batch) Adam training with validation after every
/// epoch; keeps the parameters of the best validation epoch.
inline TrainResult train(const TrainConfig& cfg, const Dataset& train_set, const Dataset& val_set,
                         const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
  validate(cfg);
  if (train_set.size() == 0) throw DataError("training set is empty");
  if (cfg.task == Task::Solubility && train_set.targets.size() != train_set.size())
    throw DataError("regression training needs one target per graph");
  const Graph& first = train_set.graphs.front();
  Rng rng = substream(cfg.seed, 0);
  GnModel model = init_model(model_spec(cfg, first.edge_dim(), first.node_dim(), first.global_dim()), rng);
  if (cfg.task == Task::Solubility) {
    double mean = 0.0;
    for (double t : train_set.targets) mean += t;
    model.head.bias[0] = mean / static_cast<double>(train_set.size());
  }
  std::vector<Tensor*> params;
  std::vector<bool> is_weight;
  for_each_parameter(model, [&](Tensor& t, const std::string&, bool w) {
    params.push_back(&t);
    is_weight.push_back(w);
  });
  AdamState adam;
  const AdamHyper hyper{cfg.lr};
  Rng order_rng = substream(cfg.seed, 1);
  Rng dropout_rng = substream(cfg.seed, 2);
  ForwardOptions opt{cfg.dropout, &dropout_rng};

  auto evaluate = [&](const GnModel& m) {
    if (val_set.size() == 0) return 0.0;
    return cfg.task == Task::Infection ? node_accuracy(m, val_set.graphs) : rmse(m, val_set);
  };
  auto better = [&](double a, double b) { return cfg.task == Task::Infection ? a > b : a < b; };

  TrainResult result{model, {}};
  const auto t_start = std::chrono::steady_clock::now();
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Tensor> batch_grads;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffle(order, order_rng);
    double loss_sum = 0.0;
    std::size_t in_batch = 0;
    for (std::size_t step = 0; step < order.size(); ++step) {
      const std::size_t idx = order[step];
      const double target = cfg.task == Task::Solubility ? train_set.targets[idx] : 0.0;
      StepResult s = loss_and_gradients(model, train_set.graphs[idx], target, cfg.task, opt);
      if (!std::isfinite(s.loss))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
      loss_sum += s.loss;
      if (in_batch == 0) batch_grads = std::move(s.grads);
      else
        for (std::size_t k = 0; k < batch_grads.size(); ++k)
          for (std::size_t i = 0; i < batch_grads[k].size(); ++i) batch_grads[k][i] += s.grads[k][i];
      if (++in_batch == cfg.batch_size || step + 1 == order.size()) {
        const double scale = 1.0 / static_cast<double>(in_batch);
        for (std::size_t k = 0; k < batch_grads.size(); ++k) {
          Tensor& g = batch_grads[k];
          if (scale != 1.0)
            for (std::size_t i = 0; i < g.size(); ++i) g[i] *= scale;
          if (is_weight[k] && cfg.l1_weight > 0.0) {
            const Tensor& w = *params[k];
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += cfg.l1_weight * ((w[i] > 0.0) - (w[i] < 0.0));
          }
        }
        adam_step(params, batch_grads, adam, hyper);
        in_batch = 0;
      }
    }
    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = loss_sum / static_cast<double>(order.size());
    em.val_metric = evaluate(model);
    em.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.metrics.epochs.push_back(em);
    if (epoch == 1 || better(em.val_metric, result.metrics.best_val_metric)) {
      result.metrics.best_epoch = epoch;
      result.metrics.best_val_metric = em.val_metric;
      result.model = model;
    }
    log::info("epoch " + std::to_string(epoch) + " loss " + std::to_string(em.train_loss) + " val " +
              std::to_string(em.val_metric));
    if (on_epoch) on_epoch(em);
  }
  if (val_set.size() == 0) result.model = model;
  result.metrics.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

// --- checkpoints ------------------------------------------------------------

struct Checkpoint {
  TrainConfig config;
  ModelSpec spec;
  GnModel model;
};

/// {"version":1, "task", "config", "tensors":[{"name","shape","data"}]} with
/// data as base64 little-endian float32.
inline nlohmann::json checkpoint_to_json(const TrainConfig& cfg, const ModelSpec& spec, const GnModel& model) {
  nlohmann::json config = to_json(cfg);
  config["edge_in"] = spec.edge_in;
  config["node_in"] = spec.node_in;
  config["global_in"] = spec.global_in;
  nlohmann::json tensors = nlohmann::json::array();
  for_each_parameter(model, [&](const Tensor& t, const std::string& name, bool) {
    tensors.push_back({{"name", name}, {"shape", t.shape()}, {"data", encode_f32(t.data())}});
  });
  return {{"version", 1}, {"task", to_string(cfg.task)}, {"config", config}, {"tensors", tensors}};
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != 1) throw DataError("unsupported checkpoint version");
    Checkpoint c;
    const auto& config = j.at("config");
    c.config = train_config_from_json(config);
    if (c.config.task != parse_task(j.at("task").get<std::string>())) throw DataError("checkpoint task mismatch");
    c.spec = model_spec(c.config, config.at("edge_in").get<std::size_t>(), config.at("node_in").get<std::size_t>(),
                        config.at("global_in").get<std::size_t>());
    Rng dummy(0);
    c.model = init_model(c.spec, dummy);
    const auto& tensors = j.at("tensors");
    std::size_t next = 0;
    for_each_parameter(c.model, [&](Tensor& t, const std::string& name, bool) {
      if (next >= tensors.size()) throw DataError("checkpoint is missing tensor " + name);
      const auto& e = tensors[next++];
      if (e.at("name").get<std::string>() != name) throw DataError("checkpoint tensor order mismatch at " + name);
      const Shape shape = e.at("shape").get<Shape>();
      if (shape != t.shape()) throw DataError("checkpoint tensor " + name + " has shape " + shape_str(shape));
      t = Tensor(shape, decode_f32(e.at("data").get<std::string>()));
    });
    if (next != tensors.size()) throw DataError("checkpoint has unexpected extra tensors");
    validate(c.model);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  } catch (const DimensionError& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline Checkpoint load_checkpoint(const std::string& path) { return checkpoint_from_json(read_json_file(path)); }

/// Model with every parameter rounded to float32, as stored in checkpoints.
inline GnModel round_to_f32(GnModel m) {
  for_each_parameter(m, [](Tensor& t, const std::string&, bool) {
    for (double& v : t.data()) v = static_cast<float>(v);
  });
  return m;
}

}  // namespace gnx
