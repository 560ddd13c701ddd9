#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gnx/graph.hpp"
#include "gnx/rng.hpp"
#include "gnx/tape.hpp"

namespace gnx {

struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // out

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
};

/// Glorot-uniform weights, zero bias.
inline Linear init_linear(std::size_t in, std::size_t out, Rng& rng) {
  Linear l{Tensor::matrix(in, out), Tensor({out})};
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& w : l.weight.data()) w = uniform(rng, -limit, limit);
  return l;
}

/// Stack of linear maps, each followed by ReLU.
struct Mlp {
  std::vector<Linear> layers;

  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }
};

inline Mlp init_mlp(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  Mlp m;
  m.layers.push_back(init_linear(in, hidden, rng));
  m.layers.push_back(init_linear(hidden, out, rng));
  return m;
}

/// One message-passing block: edge update, edge->node aggregation, node
/// update and an optional global update over aggregated edges and nodes.
struct GnLayer {
  std::size_t edge_in = 0, node_in = 0, global_in = 0;
  Mlp edge_fn;  // [e_k, v_receiver, v_sender, u]
  Mlp node_fn;  // [aggregated incoming e', v_i, u]
  std::optional<Mlp> global_fn;  // [aggregated e', aggregated v', u]
  Reduce edge_to_node = Reduce::Sum;
  Reduce edge_to_global = Reduce::Sum;
  Reduce node_to_global = Reduce::Sum;

  std::size_t edge_out() const { return edge_fn.out_dim(); }
  std::size_t node_out() const { return node_fn.out_dim(); }
  std::size_t global_out() const { return global_fn ? global_fn->out_dim() : global_in; }
};

enum class HeadKind { NodeLogit, GlobalScalar };

struct GnModel {
  std::vector<GnLayer> layers;
  HeadKind head_kind = HeadKind::NodeLogit;
  Linear head;
};

struct ModelSpec {
  std::size_t edge_in = 0, node_in = 0, global_in = 0;
  std::size_t layers = 1;
  std::size_t width = 16;
  Reduce pool = Reduce::Max;
  HeadKind head = HeadKind::NodeLogit;
  bool global_update = false;
};

inline GnModel init_model(const ModelSpec& s, Rng& rng) {
  if (s.layers == 0 || s.width == 0) throw ConfigError("model needs at least one layer and positive width");
  if (s.head == HeadKind::GlobalScalar && !s.global_update)
    throw ConfigError("a global scalar head needs global updates");
  GnModel m;
  m.head_kind = s.head;
  std::size_t e = s.edge_in, v = s.node_in, u = s.global_in;
  for (std::size_t l = 0; l < s.layers; ++l) {
    GnLayer layer;
    layer.edge_in = e;
    layer.node_in = v;
    layer.global_in = u;
    layer.edge_fn = init_mlp(e + 2 * v + u, s.width, s.width, rng);
    layer.node_fn = init_mlp(s.width + v + u, s.width, s.width, rng);
    if (s.global_update) layer.global_fn = init_mlp(2 * s.width + u, s.width, s.width, rng);
    layer.edge_to_node = layer.edge_to_global = layer.node_to_global = s.pool;
    e = layer.edge_out();
    v = layer.node_out();
    u = layer.global_out();
    m.layers.push_back(std::move(layer));
  }
  m.head = init_linear(s.head == HeadKind::NodeLogit ? v : u, 1, rng);
  return m;
}

/// Visits every trainable tensor in a fixed order: per layer edge, node and
/// global MLPs (weight then bias of each linear), then the head.
template <class Model, class F>
void for_each_parameter(Model& m, F&& f) {
  auto visit_mlp = [&](auto& mlp, const std::string& prefix) {
    for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
      f(mlp.layers[i].weight, prefix + ".lin" + std::to_string(i) + ".weight", true);
      f(mlp.layers[i].bias, prefix + ".lin" + std::to_string(i) + ".bias", false);
    }
  };
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    auto& layer = m.layers[l];
    const std::string p = "gn" + std::to_string(l);
    visit_mlp(layer.edge_fn, p + ".edge");
    visit_mlp(layer.node_fn, p + ".node");
    if (layer.global_fn) visit_mlp(*layer.global_fn, p + ".global");
  }
  f(m.head.weight, std::string("head.weight"), true);
  f(m.head.bias, std::string("head.bias"), false);
}

/// Checks that consecutive layers chain and the head fits.
inline void validate(const GnModel& m) {
  if (m.layers.empty()) throw DimensionError("model has no layers");
  auto check_mlp = [](const Mlp& mlp, std::size_t in, const std::string& where) {
    if (mlp.layers.empty()) throw DimensionError(where + " has no linear maps");
    if (mlp.in_dim() != in)
      throw DimensionError(where + " expects " + std::to_string(mlp.in_dim()) + " inputs, sources provide " +
                           std::to_string(in));
    for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
      const Linear& l = mlp.layers[i];
      if (l.bias.size() != l.out_dim()) throw DimensionError(where + " bias length mismatch");
      if (i + 1 < mlp.layers.size() && l.out_dim() != mlp.layers[i + 1].in_dim())
        throw DimensionError(where + " hidden sizes do not chain");
    }
  };
  std::size_t e = m.layers.front().edge_in, v = m.layers.front().node_in, u = m.layers.front().global_in;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const GnLayer& g = m.layers[l];
    const std::string p = "layer " + std::to_string(l);
    if (g.edge_in != e || g.node_in != v || g.global_in != u)
      throw DimensionError(p + " input dimensions do not match the previous layer's outputs");
    check_mlp(g.edge_fn, e + 2 * v + u, p + " edge update");
    check_mlp(g.node_fn, g.edge_out() + v + u, p + " node update");
    if (g.global_fn) check_mlp(*g.global_fn, g.edge_out() + g.node_out() + u, p + " global update");
    e = g.edge_out();
    v = g.node_out();
    u = g.global_out();
  }
  const std::size_t head_in = m.head_kind == HeadKind::NodeLogit ? v : u;
  if (m.head.in_dim() != head_in || m.head.out_dim() != 1 || m.head.bias.size() != 1)
    throw DimensionError("head expects " + std::to_string(m.head.in_dim()) + " inputs, final layer provides " +
                         std::to_string(head_in));
}

// --- forward ----------------------------------------------------------------

struct ForwardOptions {
  double dropout = 0.0;
  Rng* rng = nullptr;  // required when dropout > 0
};

/// Tape variables holding one graph state (the input of a layer or the final output).
struct GraphVars {
  Var nodes, edges, global;  // global invalid when absent
};

struct ForwardTrace {
  Var output;                        // n_v x 1 logits or 1 x 1 scalar
  std::vector<GraphVars> layer_inputs;
  GraphVars final_state;
  std::vector<Var> parameters;       // for_each_parameter order
  IndexList senders, receivers;
};

namespace detail {

struct ParamCursor {
  const std::vector<Var>& vars;
  std::size_t next = 0;
  Var take() { return vars.at(next++); }
};

inline Var mlp_forward(Tape& tape, Var x, const Mlp& mlp, ParamCursor& params, const ForwardOptions& opt,
                       const std::string& name) {
  Tape::Scope scope(tape, name);
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    Tape::Scope lin(tape, "lin" + std::to_string(i));
    const Var w = params.take();
    const Var b = params.take();
    x = tape.linear(x, w, b);
    if (opt.dropout > 0.0) {
      const Tensor& v = tape.value(x);
      Tensor mask(v.shape());
      const double keep = 1.0 - opt.dropout;
      for (double& m : mask.data()) m = bernoulli(*opt.rng, keep) ? 1.0 / keep : 0.0;
      x = tape.dropout(x, std::move(mask));
    }
    x = tape.relu(x);
  }
  return x;
}

}  // namespace detail

/// Records one layer on the tape. Edges aggregate at their receiver.
inline GraphVars gn_layer_forward(Tape& tape, const GraphVars& in, const GnLayer& layer, const IndexList& senders,
                                  const IndexList& receivers, std::size_t n_nodes, detail::ParamCursor& params,
                                  const ForwardOptions& opt) {
  const std::size_t n_edges = senders->size();
  std::vector<Var> edge_parts{in.edges, tape.gather(in.nodes, receivers), tape.gather(in.nodes, senders)};
  if (in.global.valid()) {
    edge_parts.push_back(tape.gather(in.global, make_index(std::vector<std::size_t>(n_edges, 0))));
  }
  const Var e_new = detail::mlp_forward(tape, tape.concat(edge_parts), layer.edge_fn, params, opt, "edge");
  const Var e_bar = tape.segment_reduce(e_new, receivers, n_nodes, layer.edge_to_node);
  std::vector<Var> node_parts{e_bar, in.nodes};
  if (in.global.valid()) node_parts.push_back(tape.gather(in.global, make_index(std::vector<std::size_t>(n_nodes, 0))));
  const Var v_new = detail::mlp_forward(tape, tape.concat(node_parts), layer.node_fn, params, opt, "node");
  GraphVars out{v_new, e_new, in.global};
  if (layer.global_fn) {
    std::vector<Var> parts{tape.segment_reduce(e_new, make_index(std::vector<std::size_t>(n_edges, 0)), 1, layer.edge_to_global),
                           tape.segment_reduce(v_new, make_index(std::vector<std::size_t>(n_nodes, 0)), 1, layer.node_to_global)};
    if (in.global.valid()) parts.push_back(in.global);
    out.global = detail::mlp_forward(tape, tape.concat(parts), *layer.global_fn, params, opt, "global");
  }
  return out;
}

/// Records the full model on `tape`: graph leaves, parameter leaves, every
/// layer and the head.
inline ForwardTrace gn_forward(Tape& tape, const Graph& graph, const GnModel& model, const ForwardOptions& opt = {}) {
  validate(model);
  validate(graph);
  const GnLayer& first = model.layers.front();
  if (graph.node_dim() != first.node_in)
    throw DimensionError("graph has " + std::to_string(graph.node_dim()) + " node features, model expects " +
                         std::to_string(first.node_in));
  if (graph.num_edges() > 0 && graph.edge_dim() != first.edge_in)
    throw DimensionError("graph has " + std::to_string(graph.edge_dim()) + " edge features, model expects " +
                         std::to_string(first.edge_in));
  if (graph.global_dim() != first.global_in)
    throw DimensionError("graph has " + std::to_string(graph.global_dim()) + " global features, model expects " +
                         std::to_string(first.global_in));
  if (opt.dropout > 0.0 && !opt.rng) throw ConfigError("dropout needs a random generator");
  if (graph.num_nodes() == 0) throw DimensionError("graph has no nodes");

  ForwardTrace tr;
  tr.senders = make_index(graph.senders);
  tr.receivers = make_index(graph.receivers);
  GraphVars state;
  state.nodes = tape.leaf(graph.nodes, Source::NodeFeatures, "input.nodes");
  state.edges = tape.leaf(graph.num_edges() > 0 ? graph.edges : Tensor::matrix(0, first.edge_in), Source::EdgeFeatures,
                          "input.edges");
  if (graph.global) state.global = tape.leaf(*graph.global, Source::GlobalFeatures, "input.global");

  for_each_parameter(model, [&](const Tensor& t, const std::string& name, bool) {
    tr.parameters.push_back(tape.leaf(t, Source::Parameter, name));
  });
  detail::ParamCursor cursor{tr.parameters};
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    Tape::Scope scope(tape, "gn" + std::to_string(l));
    tr.layer_inputs.push_back(state);
    state = gn_layer_forward(tape, state, model.layers[l], tr.senders, tr.receivers, graph.num_nodes(), cursor, opt);
  }
  tr.final_state = state;
  Tape::Scope scope(tape, "head");
  const Var w = cursor.take();
  const Var b = cursor.take();
  tr.output = tape.linear(model.head_kind == HeadKind::NodeLogit ? state.nodes : state.global, w, b);
  return tr;
}

/// Prediction without keeping the tape: node logits (n_v) or a single scalar.
inline std::vector<double> predict(const Graph& graph, const GnModel& model) {
  Tape tape;
  const ForwardTrace tr = gn_forward(tape, graph, model);
  return tape.value(tr.output).values();
}

/// Applies one layer to a graph and returns the updated graph. Topology and
/// labels are carried over unchanged.
inline Graph gn_layer_forward(const Graph& graph, const GnLayer& layer) {
  validate(graph);
  if (graph.node_dim() != layer.node_in || (graph.num_edges() > 0 && graph.edge_dim() != layer.edge_in) ||
      graph.global_dim() != layer.global_in)
    throw DimensionError("graph dimensions do not match layer inputs");
  Tape tape;
  std::vector<Var> params;
  for (const Mlp* mlp : {&layer.edge_fn, &layer.node_fn}) {
    for (const Linear& l : mlp->layers) {
      params.push_back(tape.leaf(l.weight, Source::Parameter));
      params.push_back(tape.leaf(l.bias, Source::Parameter));
    }
  }
  if (layer.global_fn)
    for (const Linear& l : layer.global_fn->layers) {
      params.push_back(tape.leaf(l.weight, Source::Parameter));
      params.push_back(tape.leaf(l.bias, Source::Parameter));
    }
  detail::ParamCursor cursor{params};
  GraphVars in{tape.leaf(graph.nodes, Source::NodeFeatures),
               tape.leaf(graph.num_edges() > 0 ? graph.edges : Tensor::matrix(0, layer.edge_in), Source::EdgeFeatures),
               graph.global ? tape.leaf(*graph.global, Source::GlobalFeatures) : Var{}};
  const GraphVars out = gn_layer_forward(tape, in, layer, make_index(graph.senders), make_index(graph.receivers),
                                         graph.num_nodes(), cursor, {});
  Graph g = graph;
  g.nodes = tape.value(out.nodes);
  g.edges = tape.value(out.edges);
  if (out.global.valid()) g.global = tape.value(out.global);
  return g;
}

}  // namespace gnx
