#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "gnx/backward.hpp"
#include "gnx/gn.hpp"

namespace gnx {

/// What is being explained: one node's pre-activation logit or the global scalar.
struct Target {
  enum class Kind { Node, Global };
  Kind kind = Kind::Node;
  std::size_t node = 0;

  static Target node_logit(std::size_t i) { return {Kind::Node, i}; }
  static Target global_scalar() { return {Kind::Global, 0}; }
  friend bool operator==(const Target&, const Target&) = default;
};

/// Attributions to the node and edge features entering one GN layer.
struct LayerAttribution {
  Tensor nodes;
  Tensor edges;
  friend bool operator==(const LayerAttribution&, const LayerAttribution&) = default;
};

struct Explanation {
  std::string method;  // sa, sa-signed, gbp, lrp-eps, lrp-eps-signed, lrp-alphabeta
  Target target;
  double output = 0.0;  // explained model output
  Tensor node_attr;
  Tensor edge_attr;
  std::optional<Tensor> global_attr;
  std::optional<double> bias_sink;  // LRP only
  std::vector<LayerAttribution> per_layer;

  /// Sum of every input attribution (nodes, edges and global).
  double total() const {
    return node_attr.sum() + edge_attr.sum() + (global_attr ? global_attr->sum() : 0.0);
  }
  friend bool operator==(const Explanation&, const Explanation&) = default;
};

// --- max pooling ------------------------------------------------------------

struct NaivePool {};
/// Relevance split in proportion to |v|^p.
struct LpNormPool {
  double p = 2.0;
};
/// Relevance shared among rows that give a similar output when forced as the maximum.
struct SearchPool {
  double delta_rel = 0.1;
  bool proportional = false;  // share by |v| instead of uniformly
};

using MaxPoolStrategy = std::variant<NaivePool, LpNormPool, SearchPool>;

inline void validate(const MaxPoolStrategy& s) {
  if (const auto* lp = std::get_if<LpNormPool>(&s); lp && !(lp->p >= 1.0))
    throw ConfigError("Lp-norm pooling needs p >= 1, got " + std::to_string(lp->p));
  if (const auto* se = std::get_if<SearchPool>(&s); se && !(se->delta_rel > 0.0))
    throw ConfigError("search pooling needs delta > 0, got " + std::to_string(se->delta_rel));
}

/// Recomputes the explained output with row `row` of column `col` forced as the pooled value.
struct PoolReplay {
  double baseline = 0.0;
  std::function<double(std::size_t row, std::size_t col)> forced_output;
};

/// Distributes the relevance R[c] of each pooled column over the k pooled rows.
/// `winners[c]` is the row that won column c in the forward pass.
inline Tensor max_pool_redistribute(const Tensor& inputs, std::span<const std::size_t> winners,
                                    std::span<const double> relevance, const MaxPoolStrategy& strategy,
                                    const PoolReplay* replay = nullptr) {
  validate(strategy);
  const std::size_t k = inputs.rows(), d = inputs.cols();
  if (winners.size() != d || relevance.size() != d)
    throw DimensionError("max_pool_redistribute: " + std::to_string(d) + " columns but " +
                         std::to_string(winners.size()) + " winners and " + std::to_string(relevance.size()) +
                         " relevance entries");
  Tensor out = Tensor::matrix(k, d);
  if (k == 0) return out;
  for (std::size_t c = 0; c < d; ++c) {
    if (winners[c] >= k) throw IndexError("max_pool_redistribute: winner row outside the pooled rows");
    if (!std::isfinite(relevance[c])) throw NumericError("max_pool_redistribute: non-finite relevance");
  }

  std::vector<double> share(k);
  for (std::size_t c = 0; c < d; ++c) {
    const double r = relevance[c];
    const std::size_t win = winners[c];
    std::fill(share.begin(), share.end(), 0.0);
    if (r == 0.0 || k == 1 || std::holds_alternative<NaivePool>(strategy)) {
      share[win] = 1.0;
    } else if (const auto* lp = std::get_if<LpNormPool>(&strategy)) {
      double vmax = 0.0;
      for (std::size_t i = 0; i < k; ++i) vmax = std::max(vmax, std::abs(inputs(i, c)));
      if (vmax == 0.0) {
        share[win] = 1.0;
      } else {
        // Rescale only when |v|^p would leave the double range.
        const bool rescale = !std::isfinite(std::pow(vmax, lp->p)) || std::pow(vmax, lp->p) == 0.0;
        double total = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
          const double a = std::abs(inputs(i, c));
          share[i] = std::pow(rescale ? a / vmax : a, lp->p);
          total += share[i];
        }
        for (double& s : share) s /= total;
      }
    } else {
      const auto& se = std::get<SearchPool>(strategy);
      if (!replay || !replay->forced_output) throw ConfigError("search pooling needs a replay handle");
      const double f = replay->baseline;
      const double tol = se.delta_rel * std::max(std::abs(f), 1e-8);
      std::vector<std::size_t> accepted;
      for (std::size_t i = 0; i < k; ++i) {
        if (i == win || inputs(i, c) == inputs(win, c)) {
          accepted.push_back(i);
          continue;
        }
        if (std::abs(replay->forced_output(i, c) - f) <= tol) accepted.push_back(i);
      }
      double total = 0.0;
      if (se.proportional)
        for (std::size_t i : accepted) total += std::abs(inputs(i, c));
      for (std::size_t i : accepted)
        share[i] = se.proportional && total > 0.0 ? std::abs(inputs(i, c)) / total
                                                  : 1.0 / static_cast<double>(accepted.size());
    }
    for (std::size_t i = 0; i < k; ++i) out(i, c) = share[i] * r;
  }
  return out;
}

// --- explanation drivers ----------------------------------------------------

namespace detail {

inline void check_target(const GnModel& model, const Graph& graph, const Target& t) {
  if (model.head_kind == HeadKind::NodeLogit) {
    if (t.kind != Target::Kind::Node) throw ConfigError("node-level model needs a node target");
    if (t.node >= graph.num_nodes())
      throw IndexError("target node " + std::to_string(t.node) + " outside graph of " +
                       std::to_string(graph.num_nodes()) + " nodes");
  } else if (t.kind != Target::Kind::Global) {
    throw ConfigError("graph-level model needs a global target");
  }
}

inline std::size_t target_row(const Target& t) { return t.kind == Target::Kind::Node ? t.node : 0; }

/// Builds the segment_max relevance rule for a recorded forward pass.
inline MaxPoolRule make_pool_rule(const MaxPoolStrategy& strategy, const Tape& tape, Var output, std::size_t row,
                                  double baseline) {
  return [&strategy, &tape, output, row, baseline](const MaxPoolRequest& q) {
    Tensor out(q.input.shape());
    const std::size_t d = q.input.cols();
    std::vector<std::vector<std::size_t>> members(q.n_segments);
    for (std::size_t k = 0; k < q.ids.size(); ++k) members[q.ids[k]].push_back(k);
    for (std::size_t s = 0; s < q.n_segments; ++s) {
      const auto& rows = members[s];
      if (rows.empty()) continue;
      Tensor sub = Tensor::matrix(rows.size(), d);
      std::vector<std::size_t> winners(d);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy(q.input.row(rows[i]).begin(), q.input.row(rows[i]).end(), sub.row(i).begin());
        for (std::size_t c = 0; c < d; ++c)
          if (q.argmax[s * d + c] == rows[i]) winners[c] = i;
      }
      PoolReplay replay{baseline, [&](std::size_t i, std::size_t c) {
                          Tensor forced = tape.value(q.node);
                          forced(s, c) = q.input(rows[i], c);
                          return tape.replay(Var{q.node}, forced, output)(row, 0);
                        }};
      const Tensor r = max_pool_redistribute(sub, winners, q.upstream.row(s), strategy, &replay);
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t c = 0; c < d; ++c) out(rows[i], c) = r(i, c);
    }
    return out;
  };
}

inline Explanation run_explanation(const GnModel& model, const Graph& graph, const Target& target,
                                   const BackwardMode& mode, const MaxPoolStrategy& pool, std::string method,
                                   bool squared) {
  check_target(model, graph, target);
  Tape tape;
  const ForwardTrace tr = gn_forward(tape, graph, model);
  const Tensor& out = tape.value(tr.output);
  const std::size_t row = target_row(target);
  const double f = out(row, 0);
  Tensor seed(out.shape());
  seed(row, 0) = is_lrp(mode) ? f : 1.0;

  MaxPoolRule rule;
  if (is_lrp(mode)) rule = make_pool_rule(pool, tape, tr.output, row, f);
  const BackwardResult res = backward(tape, tr.output, seed, mode, rule);

  auto post = [squared](Tensor t) {
    if (squared)
      for (double& v : t.data()) v *= v;
    return t;
  };
  Explanation e;
  e.method = std::move(method);
  e.target = target;
  e.output = f;
  e.node_attr = post(res.at(tr.layer_inputs.front().nodes));
  e.edge_attr = post(res.at(tr.layer_inputs.front().edges));
  if (tr.layer_inputs.front().global.valid()) e.global_attr = post(res.at(tr.layer_inputs.front().global));
  if (is_lrp(mode)) e.bias_sink = res.bias_sink;
  for (const GraphVars& in : tr.layer_inputs) e.per_layer.push_back({post(res.at(in.nodes)), post(res.at(in.edges))});
  return e;
}

}  // namespace detail

/// Gradient of the explained output with respect to every input feature,
/// squared elementwise unless `signed_gradient` is set.
inline Explanation sensitivity_analysis(const GnModel& model, const Graph& graph, const Target& target,
                                        bool signed_gradient = false) {
  return detail::run_explanation(model, graph, target, Gradient{}, NaivePool{},
                                 signed_gradient ? "sa-signed" : "sa", !signed_gradient);
}

inline Explanation guided_backprop(const GnModel& model, const Graph& graph, const Target& target) {
  return detail::run_explanation(model, graph, target, Guided{}, NaivePool{}, "gbp", false);
}

inline Explanation lrp(const GnModel& model, const Graph& graph, const Target& target,
                       const BackwardMode& rule = LrpEpsilon{}, const MaxPoolStrategy& max_pool = NaivePool{}) {
  if (!is_lrp(rule)) throw ConfigError("lrp needs an epsilon or alpha-beta rule");
  validate(max_pool);
  std::string tag = "lrp-alphabeta";
  if (const auto* e = std::get_if<LrpEpsilon>(&rule)) tag = e->signed_z ? "lrp-eps-signed" : "lrp-eps";
  return detail::run_explanation(model, graph, target, rule, max_pool, tag, false);
}

enum class LayerReduce { SignedSum, AbsSum };

struct EntityScores {
  std::vector<double> nodes;
  std::vector<double> edges;
};

/// One score per node and per edge, reduced over every layer input and every feature.
inline EntityScores aggregate_layers(const Explanation& e, LayerReduce reduce = LayerReduce::SignedSum) {
  EntityScores s{std::vector<double>(e.node_attr.rows(), 0.0), std::vector<double>(e.edge_attr.rows(), 0.0)};
  auto add = [reduce](const Tensor& t, std::vector<double>& dst) {
    if (t.rank() != 2 || t.rows() != dst.size()) throw DimensionError("per-layer attribution does not match entities");
    for (std::size_t r = 0; r < t.rows(); ++r)
      for (double v : t.row(r)) dst[r] += reduce == LayerReduce::AbsSum ? std::abs(v) : v;
  };
  for (const LayerAttribution& l : e.per_layer) {
    add(l.nodes, s.nodes);
    add(l.edges, s.edges);
  }
  return s;
}

/// Input-level entity scores (first layer only), signed sum over features.
inline EntityScores input_scores(const Explanation& e) {
  EntityScores s{std::vector<double>(e.node_attr.rows(), 0.0), std::vector<double>(e.edge_attr.rows(), 0.0)};
  for (std::size_t r = 0; r < e.node_attr.rows(); ++r)
    for (double v : e.node_attr.row(r)) s.nodes[r] += v;
  for (std::size_t r = 0; r < e.edge_attr.rows(); ++r)
    for (double v : e.edge_attr.row(r)) s.edges[r] += v;
  return s;
}

}  // namespace gnx
