#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <numeric>

#include "gnx/selftest.hpp"

using namespace gnx;

namespace {

Linear lin(std::vector<std::vector<double>> w, std::vector<double> b) {
  return Linear{Tensor::from_rows(w), Tensor::vector(std::move(b))};
}

Mlp single(Linear l) { return Mlp{{std::move(l)}}; }

/// Relabels nodes: node i of `g` becomes node perm[i].
Graph permute_nodes(const Graph& g, const std::vector<std::size_t>& perm) {
  Graph p = g;
  for (std::size_t i = 0; i < g.num_nodes(); ++i)
    for (std::size_t c = 0; c < g.node_dim(); ++c) p.nodes(perm[i], c) = g.nodes(i, c);
  for (std::size_t k = 0; k < g.num_edges(); ++k) {
    p.senders[k] = perm[g.senders[k]];
    p.receivers[k] = perm[g.receivers[k]];
  }
  return p;
}

Graph permute_edges(const Graph& g, const std::vector<std::size_t>& perm) {
  Graph p = g;
  for (std::size_t k = 0; k < g.num_edges(); ++k) {
    for (std::size_t c = 0; c < g.edge_dim(); ++c) p.edges(perm[k], c) = g.edges(k, c);
    p.senders[perm[k]] = g.senders[k];
    p.receivers[perm[k]] = g.receivers[k];
  }
  return p;
}

std::vector<std::size_t> random_permutation(Rng& rng, std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  shuffle(p, rng);
  return p;
}

/// Sums are order-dependent in floating point; a model built only from max
/// aggregations is exactly invariant.
bool all_max(const GnModel& m) {
  for (const GnLayer& l : m.layers)
    if (l.edge_to_node != Reduce::Max || l.edge_to_global != Reduce::Max || l.node_to_global != Reduce::Max)
      return false;
  return true;
}

std::int64_t ulp_distance(double a, double b) {
  if (a == b) return 0;
  auto key = [](double v) {
    const auto bits = std::bit_cast<std::int64_t>(v);
    return bits < 0 ? std::numeric_limits<std::int64_t>::min() - bits : bits;
  };
  const std::int64_t d = key(a) - key(b);
  return d < 0 ? -d : d;
}

}  // namespace

TEST(BuildGraph, SingleNodeNoEdges) {
  const Graph g = build_graph({{1, 2}}, {}, {}, {}, std::nullopt, 3);
  EXPECT_EQ(g.num_nodes(), 1u);
  EXPECT_EQ(g.num_edges(), 0u);
  EXPECT_EQ(g.edge_dim(), 3u);
}

TEST(BuildGraph, DanglingReceiverIsIndexError) {
  EXPECT_THROW(build_graph({{1}, {2}}, {{0}}, {0}, {2}), IndexError);
}

TEST(BuildGraph, LengthMismatchIsDimensionError) {
  EXPECT_THROW(build_graph({{1}, {2}}, {{0}, {1}}, {0}, {1}), DimensionError);
  EXPECT_THROW(build_graph({{1}, {2, 3}}, {}, {}, {}), DimensionError);
}

TEST(BuildGraph, NonFiniteFeaturesRejected) {
  EXPECT_THROW(build_graph({{std::numeric_limits<double>::infinity()}}, {}, {}, {}), NumericError);
}

TEST(GraphJson, FourNodeRoundTrip) {
  Graph g = build_graph({{1, -1}, {0.25, 2}, {-3, 0.5}, {1e-9, 7}}, {{1}, {-1}, {0.125}, {3}}, {0, 1, 2, 3},
                        {1, 2, 3, 0}, std::vector<double>{0.5});
  g.labels = std::vector<int>{0, 1, 1, 0};
  const std::string text = dump_graph(g);
  const Graph back = graph_from_json(nlohmann::json::parse(text));
  EXPECT_EQ(back, g);
  EXPECT_EQ(dump_graph(back), text);
}

TEST(GraphJson, FieldNamesAndNulls) {
  const nlohmann::json j = to_json(build_graph({{1}}, {}, {}, {}));
  for (const char* k : {"nodes", "edges", "senders", "receivers", "global", "labels"}) EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_TRUE(j["global"].is_null());
  EXPECT_TRUE(j["labels"].is_null());
}

TEST(GraphJson, MalformedIsDataError) {
  EXPECT_THROW(graph_from_json(nlohmann::json::parse(R"({"nodes": [[1]]})")), DataError);
}

TEST(GnLayer, HandComputedTwoNodeInstance) {
  GnLayer layer;
  layer.edge_in = 1;
  layer.node_in = 1;
  layer.edge_fn = single(lin({{1}, {10}, {100}}, {0.5}));  // [e, v_recv, v_send]
  layer.node_fn = single(lin({{1}, {-1}}, {0}));            // [e_bar, v]
  layer.global_fn = single(lin({{1}, {2}}, {0}));           // [sum e', sum v']
  const Graph g = build_graph({{1}, {2}}, {{3}}, {0}, {1});
  const Graph out = gn_layer_forward(g, layer);
  // e' = 3 + 10*2 + 100*1 + 0.5
  EXPECT_DOUBLE_EQ(out.edges(0, 0), 123.5);
  // node 0 receives nothing: relu(0 - 1) = 0; node 1: relu(123.5 - 2)
  EXPECT_DOUBLE_EQ(out.nodes(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(out.nodes(1, 0), 121.5);
  ASSERT_TRUE(out.global.has_value());
  EXPECT_DOUBLE_EQ((*out.global)(0, 0), 123.5 + 2 * 121.5);
  EXPECT_EQ(out.senders, g.senders);
  EXPECT_EQ(out.receivers, g.receivers);
}

TEST(GnLayer, ZeroEdgesGiveZeroAggregate) {
  Rng rng(7);
  for (Reduce r : {Reduce::Sum, Reduce::Mean, Reduce::Max}) {
    GnLayer layer;
    layer.edge_in = 2;
    layer.node_in = 3;
    layer.edge_fn = init_mlp(2 + 6, 4, 4, rng);
    layer.node_fn = init_mlp(4 + 3, 4, 5, rng);
    layer.edge_to_node = r;
    const Graph g = build_graph({{1, -1, 0.5}, {0.2, 0.3, -2}}, {}, {}, {}, std::nullopt, 2);
    const Graph out = gn_layer_forward(g, layer);
    for (std::size_t i = 0; i < 2; ++i) {
      std::vector<double> x(4, 0.0);
      for (std::size_t c = 0; c < 3; ++c) x.push_back(g.nodes(i, c));
      const Tensor expect = relu_forward(linear_forward(
          relu_forward(linear_forward(Tensor::row_vector(x), layer.node_fn.layers[0].weight, layer.node_fn.layers[0].bias)),
          layer.node_fn.layers[1].weight, layer.node_fn.layers[1].bias));
      for (std::size_t c = 0; c < 5; ++c) EXPECT_DOUBLE_EQ(out.nodes(i, c), expect[c]) << to_string(r);
    }
  }
}

TEST(GnLayer, DimensionMismatch) {
  Rng rng(1);
  GnLayer layer;
  layer.edge_in = 1;
  layer.node_in = 2;
  layer.edge_fn = init_mlp(5, 3, 3, rng);
  layer.node_fn = init_mlp(5, 3, 3, rng);
  EXPECT_THROW(gn_layer_forward(build_graph({{1, 2, 3}}, {}, {}, {}, std::nullopt, 1), layer), DimensionError);
}

TEST(GnForward, ZeroWeightsGiveHeadBias) {
  ModelSpec s;
  s.edge_in = 2;
  s.node_in = 4;
  s.layers = 2;
  s.width = 3;
  Rng rng(0);
  GnModel m = init_model(s, rng);
  for_each_parameter(m, [](Tensor& t, const std::string&, bool) { std::fill(t.data().begin(), t.data().end(), 0.0); });
  m.head.bias[0] = -0.75;
  const std::vector<double> y = predict(build_graph({{1, -1, 1, -1}}, {}, {}, {}, std::nullopt, 2), m);
  ASSERT_EQ(y.size(), 1u);
  EXPECT_EQ(y[0], -0.75);
}

TEST(GnForward, InfectionArchitectureOnFourNodeGraph) {
  ModelSpec s;
  s.edge_in = infection::kEdgeDim;
  s.node_in = infection::kNodeDim;
  s.layers = 3;
  s.width = 16;
  Rng rng(4);
  const GnModel m = init_model(s, rng);
  const Graph g = build_graph({{-1, -1, 1, -1}, {1, -1, -1, 1}, {-1, -1, 1, 1}, {-1, 1, -1, -1}},
                              {{-1, 1}, {-1, -1}, {1, 1}, {-1, 1}}, {1, 2, 1, 3}, {2, 1, 0, 1});
  const std::vector<double> y = predict(g, m);
  ASSERT_EQ(y.size(), 4u);
  for (double v : y) EXPECT_TRUE(std::isfinite(v));
}

TEST(GnForward, HeadAndGraphDimensionChecks) {
  ModelSpec s;
  s.edge_in = 2;
  s.node_in = 4;
  Rng rng(0);
  const GnModel m = init_model(s, rng);
  EXPECT_THROW(predict(build_graph({{1, 2, 3}}, {}, {}, {}, std::nullopt, 2), m), DimensionError);
  EXPECT_THROW(predict(build_graph({{1, 2, 3, 4}, {1, 2, 3, 4}}, {{1, 2, 3}}, {0}, {1}), m), DimensionError);
  s.head = HeadKind::GlobalScalar;
  EXPECT_THROW(init_model(s, rng), ConfigError);
}

TEST(GnProperty, NodePermutationEquivariance) {
  Rng rng(201);
  for (int trial = 0; trial < 300; ++trial) {
    const selftest::Case c = selftest::random_case(rng, {}, 8);
    const std::vector<std::size_t> perm = random_permutation(rng, c.graph.num_nodes());
    const std::vector<double> y = predict(c.graph, c.model);
    const std::vector<double> yp = predict(permute_nodes(c.graph, perm), c.model);
    const double tol = all_max(c.model) ? 0.0 : 1e-10;
    if (c.model.head_kind == HeadKind::GlobalScalar) {
      EXPECT_NEAR(yp[0], y[0], tol * std::max(1.0, std::abs(y[0])));
    } else {
      for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(yp[perm[i]], y[i], tol * std::max(1.0, std::abs(y[i])));
    }
  }
}

TEST(GnProperty, MaxOnlyModelsAgreeToRounding) {
  Rng rng(206);
  selftest::RandomModelOptions o;
  o.pool = Reduce::Max;
  for (int trial = 0; trial < 200; ++trial) {
    const selftest::Case c = selftest::random_case(rng, o, 8);
    const std::vector<std::size_t> perm = random_permutation(rng, c.graph.num_nodes());
    const std::vector<double> y = predict(c.graph, c.model);
    const std::vector<double> yp = predict(permute_nodes(c.graph, perm), c.model);
    // The matrix kernels round differently depending on a row's position in
    // the block, so "exact" is a few ulps here.
    if (c.model.head_kind == HeadKind::GlobalScalar) {
      EXPECT_LE(ulp_distance(yp[0], y[0]), 64);
    } else {
      for (std::size_t i = 0; i < y.size(); ++i) EXPECT_LE(ulp_distance(yp[perm[i]], y[i]), 64) << y[i];
    }
  }
}

TEST(GnProperty, EdgeOrderDoesNotMatter) {
  Rng rng(202);
  for (int trial = 0; trial < 300; ++trial) {
    const selftest::Case c = selftest::random_case(rng, {}, 8);
    const Graph p = permute_edges(c.graph, random_permutation(rng, c.graph.num_edges()));
    const std::vector<double> y = predict(c.graph, c.model), yp = predict(p, c.model);
    const double tol = all_max(c.model) ? 0.0 : 1e-10;
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(yp[i], y[i], tol * std::max(1.0, std::abs(y[i])));
  }
}

TEST(GnProperty, IsolatedNodeLeavesOtherLogitsUnchanged) {
  Rng rng(203);
  for (int trial = 0; trial < 300; ++trial) {
    selftest::RandomModelOptions o;
    o.pool = trial % 2 ? Reduce::Max : Reduce::Sum;
    selftest::Case c = selftest::random_case(rng, o, 8);
    if (c.model.head_kind != HeadKind::NodeLogit) continue;
    const std::vector<double> y = predict(c.graph, c.model);
    Graph bigger = c.graph;
    std::vector<double> extra(c.graph.node_dim());
    for (double& v : extra) v = uniform(rng, -1.0, 1.0);
    Tensor nodes = Tensor::matrix(c.graph.num_nodes() + 1, c.graph.node_dim());
    std::copy(c.graph.nodes.data().begin(), c.graph.nodes.data().end(), nodes.data().begin());
    std::copy(extra.begin(), extra.end(), nodes.row(c.graph.num_nodes()).begin());
    bigger.nodes = nodes;
    const std::vector<double> yb = predict(bigger, c.model);
    // A global update would let the new node reach every other node.
    const bool local = std::none_of(c.model.layers.begin(), c.model.layers.end(),
                                    [](const GnLayer& l) { return l.global_fn.has_value(); });
    if (local) {
      for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(yb[i], y[i], 1e-12 * std::max(1.0, std::abs(y[i])));
    }
  }
}

TEST(GnProperty, TopologyPreservedThroughLayers) {
  Rng rng(204);
  for (int trial = 0; trial < 100; ++trial) {
    const selftest::Case c = selftest::random_case(rng, {}, 8);
    Graph g = c.graph;
    for (const GnLayer& l : c.model.layers) {
      g = gn_layer_forward(g, l);
      EXPECT_EQ(g.senders, c.graph.senders);
      EXPECT_EQ(g.receivers, c.graph.receivers);
      EXPECT_EQ(g.num_nodes(), c.graph.num_nodes());
    }
  }
}

TEST(GnProperty, LayerwiseApplicationMatchesFullForward) {
  Rng rng(205);
  for (int trial = 0; trial < 100; ++trial) {
    const selftest::Case c = selftest::random_case(rng, {}, 8);
    Graph g = c.graph;
    for (const GnLayer& l : c.model.layers) g = gn_layer_forward(g, l);
    const Tensor& h = c.model.head_kind == HeadKind::NodeLogit ? g.nodes : *g.global;
    const Tensor expect = linear_forward(h, c.model.head.weight, c.model.head.bias);
    const std::vector<double> y = predict(c.graph, c.model);
    ASSERT_EQ(y.size(), expect.size());
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_DOUBLE_EQ(y[i], expect[i]);
  }
}
