#pragma once

#include <cmath>
#include <cstdio>
#include <queue>
#include <string>
#include <vector>

#include "gnx/chem.hpp"
#include "gnx/explain.hpp"
#include "gnx/infection.hpp"

namespace gnx::selftest {

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

// --- random fixtures (shared with the test suite) ---------------------------

struct RandomModelOptions {
  std::size_t max_layers = 3;
  std::size_t max_width = 8;
  bool zero_bias = false;
  bool nonnegative = false;  // every weight and bias >= 0
  std::optional<Reduce> pool;  // random when empty
};

inline Reduce random_reduce(Rng& rng) {
  static constexpr Reduce kAll[] = {Reduce::Sum, Reduce::Mean, Reduce::Max};
  return kAll[uniform_index(rng, 3)];
}

/// Random model over random input dimensions; biases are drawn too unless zero_bias.
inline GnModel random_model(Rng& rng, const RandomModelOptions& o, std::size_t edge_in, std::size_t node_in,
                            std::size_t global_in) {
  ModelSpec s;
  s.edge_in = edge_in;
  s.node_in = node_in;
  s.global_in = global_in;
  s.layers = 1 + uniform_index(rng, o.max_layers);
  s.width = 1 + uniform_index(rng, o.max_width);
  s.pool = o.pool ? *o.pool : random_reduce(rng);
  s.global_update = bernoulli(rng, 0.5);
  s.head = s.global_update && bernoulli(rng, 0.5) ? HeadKind::GlobalScalar : HeadKind::NodeLogit;
  GnModel m = init_model(s, rng);
  for (GnLayer& l : m.layers) {
    l.edge_to_node = o.pool ? *o.pool : random_reduce(rng);
    l.edge_to_global = o.pool ? *o.pool : random_reduce(rng);
    l.node_to_global = o.pool ? *o.pool : random_reduce(rng);
  }
  for_each_parameter(m, [&](Tensor& t, const std::string&, bool is_weight) {
    for (double& v : t.data()) {
      if (!is_weight) v = o.zero_bias ? 0.0 : uniform(rng, -0.5, 0.5);
      if (o.nonnegative) v = std::abs(v);
    }
  });
  return m;
}

/// Random directed multigraph with up to max_nodes nodes (self loops allowed).
inline Graph random_graph(Rng& rng, std::size_t max_nodes, std::size_t edge_dim, std::size_t node_dim,
                          std::size_t global_dim, bool nonnegative = false) {
  const std::size_t n = 1 + uniform_index(rng, max_nodes);
  const std::size_t m = uniform_index(rng, 2 * n + 1);
  auto value = [&] { return nonnegative ? uniform01(rng) : uniform(rng, -1.0, 1.0); };
  Graph g;
  g.nodes = Tensor::matrix(n, node_dim);
  for (double& v : g.nodes.data()) v = value();
  g.edges = Tensor::matrix(m, edge_dim);
  for (double& v : g.edges.data()) v = value();
  for (std::size_t k = 0; k < m; ++k) {
    g.senders.push_back(uniform_index(rng, n));
    g.receivers.push_back(uniform_index(rng, n));
  }
  if (global_dim > 0) {
    g.global = Tensor::matrix(1, global_dim);
    for (double& v : g.global->data()) v = value();
  }
  return g;
}

struct Case {
  GnModel model;
  Graph graph;
};

inline Case random_case(Rng& rng, const RandomModelOptions& o, std::size_t max_nodes = 6) {
  const std::size_t de = 1 + uniform_index(rng, 3), dv = 1 + uniform_index(rng, 3), du = uniform_index(rng, 3);
  Case c{random_model(rng, o, de, dv, du), random_graph(rng, max_nodes, de, dv, du, o.nonnegative)};
  return c;
}

inline Target random_target(Rng& rng, const Case& c) {
  return c.model.head_kind == HeadKind::GlobalScalar ? Target::global_scalar()
                                                     : Target::node_logit(uniform_index(rng, c.graph.num_nodes()));
}

inline double output_of(const GnModel& m, const Graph& g, const Target& t) {
  return predict(g, m).at(t.kind == Target::Kind::Node ? t.node : 0);
}

// --- checks -----------------------------------------------------------------

struct GradientReport {
  double max_rel_error = 0.0;
  std::size_t compared = 0;
  std::size_t kinks = 0;
};

/// Compares the taped gradient of one output with central differences on
/// every node and edge feature. Coordinates where two step sizes disagree
/// straddle a ReLU or max kink and are skipped.
inline GradientReport gradient_check(const GnModel& m, const Graph& g, const Target& t, double h = 1e-6) {
  const Explanation sa = sensitivity_analysis(m, g, t, true);
  GradientReport rep;
  auto scan = [&](Tensor Graph::*field, const Tensor& analytic) {
    Graph probe = g;
    Tensor& x = probe.*field;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double x0 = x[i];
      auto fd = [&](double step) {
        x[i] = x0 + step;
        const double up = output_of(m, probe, t);
        x[i] = x0 - step;
        const double down = output_of(m, probe, t);
        x[i] = x0;
        return (up - down) / (2.0 * step);
      };
      const double a = fd(h), b = fd(h / 4.0);
      if (std::abs(a - b) > 1e-6 * std::max({std::abs(a), std::abs(b), 1.0})) {
        ++rep.kinks;
        continue;
      }
      const double ref = analytic[i];
      const double err = std::abs(ref - a) / std::max({std::abs(ref), std::abs(a), 1e-4});
      rep.max_rel_error = std::max(rep.max_rel_error, err);
      ++rep.compared;
    }
  };
  scan(&Graph::nodes, sa.node_attr);
  scan(&Graph::edges, sa.edge_attr);
  return rep;
}

/// |(sum of attributions + bias sink) - output| / |output|.
inline double conservation_error(const Explanation& e) {
  const double total = e.total() + e.bias_sink.value_or(0.0);
  return std::abs(total - e.output) / std::max(std::abs(e.output), 1e-12);
}

/// Independent per-node statement of the infection rule.
inline std::vector<int> brute_force_labels(const Graph& g) {
  std::vector<int> out(g.num_nodes(), 0);
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    if (g.nodes(i, infection::kSick) > 0.0) {
      out[i] = 1;
      continue;
    }
    if (g.nodes(i, infection::kImmune) > 0.0) continue;
    for (std::size_t k = 0; k < g.num_edges(); ++k)
      if (g.receivers[k] == i && g.nodes(g.senders[k], infection::kSick) > 0.0 &&
          g.edges(k, infection::kVirtual) < 0.0)
        out[i] = 1;
  }
  return out;
}

/// A bond is in a ring when its endpoints stay connected without it.
inline std::vector<bool> ring_bonds_by_search(const chem::Molecule& m) {
  const auto inc = m.incident_bonds();
  std::vector<bool> ring(m.bonds.size(), false);
  for (std::size_t skip = 0; skip < m.bonds.size(); ++skip) {
    std::vector<bool> seen(m.atoms.size(), false);
    std::queue<std::size_t> q;
    q.push(m.bonds[skip].a);
    seen[m.bonds[skip].a] = true;
    while (!q.empty()) {
      const std::size_t a = q.front();
      q.pop();
      for (std::size_t k : inc[a]) {
        if (k == skip) continue;
        const std::size_t b = m.other_end(k, a);
        if (!seen[b]) {
          seen[b] = true;
          q.push(b);
        }
      }
    }
    ring[skip] = seen[m.bonds[skip].b];
  }
  return ring;
}

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

/// Gradient, conservation, infection and parser checks on fixtures drawn from `seed`.
inline std::vector<Check> run(std::uint64_t seed, std::size_t cases = 25) {
  std::vector<Check> out;

  {
    Rng rng = substream(seed, 1);
    double worst = 0.0;
    std::size_t compared = 0;
    for (std::size_t i = 0; i < cases; ++i) {
      const Case c = random_case(rng, {});
      const GradientReport r = gradient_check(c.model, c.graph, random_target(rng, c));
      worst = std::max(worst, r.max_rel_error);
      compared += r.compared;
    }
    out.push_back({"gradient vs finite differences", worst <= 1e-4 && compared > 0,
                   fmt("max rel error %.3g", worst) + ", " + std::to_string(compared) + " coordinates"});
  }

  {
    Rng rng = substream(seed, 2);
    double worst_zero = 0.0, worst_bias = 0.0;
    std::size_t done = 0;
    for (std::size_t attempt = 0; done < cases && attempt < 50 * cases; ++attempt) {
      const bool zero_bias = done % 2 == 0;
      RandomModelOptions opts;
      opts.zero_bias = zero_bias;
      const Case c = random_case(rng, opts);
      const Target t = random_target(rng, c);
      if (!(output_of(c.model, c.graph, t) > 0.0)) continue;
      const double err = conservation_error(lrp(c.model, c.graph, t));
      (zero_bias ? worst_zero : worst_bias) = std::max(zero_bias ? worst_zero : worst_bias, err);
      ++done;
    }
    out.push_back({"LRP conservation", done == cases && worst_zero <= 1e-6 && worst_bias <= 1e-6,
                   fmt("zero-bias %.3g", worst_zero) + fmt(", with bias sink %.3g", worst_bias)});
  }

  {
    infection::Config cfg = infection::Config::eval(cases * 4, seed);
    std::size_t mismatched = 0;
    for (std::size_t i = 0; i < cfg.n_graphs; ++i) {
      const Graph g = infection::dataset_graph(cfg, i);
      if (*g.labels != brute_force_labels(g)) ++mismatched;
    }
    out.push_back({"infection labels vs per-node rule", mismatched == 0,
                   std::to_string(cfg.n_graphs - mismatched) + "/" + std::to_string(cfg.n_graphs) + " graphs agree"});
  }

  {
    std::string detail;
    bool ok = true;
    auto expect = [&](bool cond, const std::string& what) {
      if (!cond) {
        ok = false;
        detail += (detail.empty() ? "" : "; ") + what;
      }
    };
    const chem::Molecule ethanol = chem::prepare("CCO");
    expect(ethanol.implicit_h == std::vector<int>{3, 2, 1}, "ethanol hydrogens");
    const chem::Molecule benzene = chem::prepare("c1ccccc1");
    bool aromatic_ring = benzene.bonds.size() == 6;
    for (const chem::Bond& b : benzene.bonds)
      aromatic_ring = aromatic_ring && b.order == chem::BondOrder::Aromatic && b.in_ring && b.conjugated;
    expect(aromatic_ring, "benzene ring bonds");
    const chem::Molecule glucose = chem::prepare("OC[C@H]1OC(O)[C@H](O)[C@@H](O)[C@@H]1O");
    std::size_t ring_bonds = 0;
    for (const chem::Bond& b : glucose.bonds) ring_bonds += b.in_ring;
    expect(glucose.atoms.size() == 12 && ring_bonds == 6, "glucose atoms/ring");
    for (const char* s : {"C1CC2CCC1C2", "c1ccc2ccccc2c1", "CC(C)C1CCC(C)CC1O", "C1CC1C1CC1", "OCC(O)CO"}) {
      const chem::Molecule m = chem::prepare(s);
      const auto ref = ring_bonds_by_search(m);
      bool same = true;
      for (std::size_t k = 0; k < m.bonds.size(); ++k) same = same && m.bonds[k].in_ring == ref[k];
      expect(same, std::string("ring bonds of ") + s);
    }
    out.push_back({"SMILES parser oracles", ok, ok ? "ethanol, benzene, glucose, ring search" : detail});
  }
  return out;
}

inline bool all_pass(const std::vector<Check>& checks) {
  for (const Check& c : checks)
    if (!c.pass) return false;
  return true;
}

inline std::string report(const std::vector<Check>& checks) {
  std::string out;
  for (const Check& c : checks) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-4s  %-36s  ", c.pass ? "PASS" : "FAIL", c.name.c_str());
    out += buf + c.detail + "\n";
  }
  return out;
}

}  // namespace gnx::selftest
