// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Usage: gnx_acceptance [criterion numbers...]

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <set>

#include "gnx/gnx.hpp"
#include "oracles.hpp"

using namespace gnx;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --- shared trained models ---------------------------------------------------

constexpr std::uint64_t kSweepSeeds = 7;

struct InfectionRun {
  GnModel model;
  double train_seconds = 0.0;
};

const std::vector<Graph>& heldout_graphs() {
  static const std::vector<Graph> g = infection::generate_dataset(infection::Config::eval(1000, 1003));
  return g;
}

/// Default training seed unless a sweep asks for another.
const InfectionRun& infection_model(Reduce pool, std::uint64_t seed = TrainConfig{}.seed) {
  static std::map<std::pair<Reduce, std::uint64_t>, InfectionRun> cache;
  if (auto it = cache.find({pool, seed}); it != cache.end()) return it->second;
  TrainConfig cfg = TrainConfig::infection();
  cfg.pool = pool;
  cfg.seed = seed;
  const Dataset train_set{infection::generate_dataset(infection::Config::train(10000, 1001)), {}};
  const Dataset val_set{infection::generate_dataset(infection::Config::train(1000, 1002)), {}};
  const auto t0 = std::chrono::steady_clock::now();
  InfectionRun run{train(cfg, train_set, val_set).model, 0.0};
  run.train_seconds = seconds_since(t0);
  return cache.emplace(std::pair{pool, seed}, std::move(run)).first->second;
}

struct SolubilityRun {
  GnModel model;
  Dataset test;
  std::vector<std::string> test_smiles;
  double val_rmse = 0.0;
  double train_seconds = 0.0;
};

const SolubilityRun& solubility_model() {
  static std::optional<SolubilityRun> cached;
  if (cached) return *cached;
  const chem::EsolData data = chem::load_esol(std::string(GNX_DATA_DIR) + "/esol.csv");
  Dataset all;
  for (const auto& r : data.records) {
    all.graphs.push_back(chem::featurize_smiles(r.smiles));
    all.targets.push_back(r.log_solubility);
  }
  const Split split = random_split(all.size(), 0);
  TrainConfig cfg = TrainConfig::solubility();
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult r = train(cfg, subset(all, split.train), subset(all, split.val));
  SolubilityRun run;
  run.train_seconds = seconds_since(t0);
  run.model = r.model;
  run.val_rmse = r.metrics.best_val_metric;
  run.test = subset(all, split.test);
  for (std::size_t i : split.test) run.test_smiles.push_back(data.records[i].smiles);
  cached = std::move(run);
  return *cached;
}

// --- 1 -----------------------------------------------------------------------

Outcome gradient_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(101);
  selftest::RandomModelOptions o;
  o.max_layers = 3;
  o.max_width = 8;
  double worst = 0.0;
  std::size_t compared = 0, kinks = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const selftest::Case c = selftest::random_case(rng, o, 6);
    const Target t = selftest::random_target(rng, c);
    const std::size_t row = t.kind == Target::Kind::Node ? t.node : 0;
    Tape tape;
    const ForwardTrace tr = gn_forward(tape, c.graph, c.model);
    Tensor seed(tape.value(tr.output).shape());
    seed(row, 0) = 1.0;
    const BackwardResult res = backward(tape, tr.output, seed, Gradient{});
    auto scan = [&](Tensor Graph::*field, Var var) {
      const Tensor& analytic = res.at(var);
      const std::vector<double> x0 = (c.graph.*field).values();
      auto f = [&](const std::vector<double>& x) {
        Graph probe = c.graph;
        probe.*field = Tensor((c.graph.*field).shape(), x);
        return predict(probe, c.model).at(row);
      };
      const std::vector<double> fd = oracle::central_difference(f, x0, 1e-6);
      const std::vector<double> fd4 = oracle::central_difference(f, x0, 0.25e-6);
      for (std::size_t i = 0; i < x0.size(); ++i) {
        if (std::abs(fd[i] - fd4[i]) > 1e-6 * std::max({std::abs(fd[i]), std::abs(fd4[i]), 1.0})) {
          ++kinks;
          continue;
        }
        worst = std::max(worst, std::abs(analytic[i] - fd[i]) / std::max({std::abs(analytic[i]), std::abs(fd[i]), 1e-4}));
        ++compared;
      }
    };
    scan(&Graph::nodes, tr.layer_inputs.front().nodes);
    scan(&Graph::edges, tr.layer_inputs.front().edges);
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-4 && compared > 0 && secs < 60.0,
          fmt("max rel error %.2e", worst) + " over " + std::to_string(compared) + " coordinates, " +
              std::to_string(kinks) + " kinks skipped, " + fmt("%.1f s", secs)};
}

// --- 2 -----------------------------------------------------------------------

Outcome lrp_conservation() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(102);
  const LrpEpsilon rule{1e-16, true};
  double worst_zero = 0.0, worst_bias = 0.0, zero_sink = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    selftest::RandomModelOptions zb;
    zb.zero_bias = true;
    const selftest::Case a = selftest::random_case(rng, zb);
    const Explanation ea = lrp(a.model, a.graph, selftest::random_target(rng, a), rule);
    worst_zero = std::max(worst_zero, std::abs(ea.total() - ea.output) / std::max(std::abs(ea.output), 1e-300));
    zero_sink = std::max(zero_sink, std::abs(*ea.bias_sink));

    const selftest::Case b = selftest::random_case(rng, {});
    const Explanation eb = lrp(b.model, b.graph, selftest::random_target(rng, b), rule);
    worst_bias = std::max(worst_bias,
                          std::abs(eb.total() + *eb.bias_sink - eb.output) / std::max(std::abs(eb.output), 1e-300));
  }
  const double secs = seconds_since(t0);
  return {worst_zero <= 1e-6 && worst_bias <= 1e-6 && zero_sink == 0.0 && secs < 60.0,
          fmt("zero-bias rel error %.2e", worst_zero) + fmt(", with bias sink %.2e", worst_bias) + fmt(", %.1f s", secs)};
}

// --- 3 -----------------------------------------------------------------------

Outcome guided_relations() {
  Rng rng(103);
  std::size_t mismatches = 0, compared = 0;
  for (int trial = 0; trial < 100; ++trial) {
    selftest::RandomModelOptions o;
    o.nonnegative = true;
    const selftest::Case c = selftest::random_case(rng, o);
    const Target t = selftest::random_target(rng, c);
    const Explanation gbp = guided_backprop(c.model, c.graph, t);
    const Explanation sa = sensitivity_analysis(c.model, c.graph, t, true);
    mismatches += !(gbp.node_attr == sa.node_attr && gbp.edge_attr == sa.edge_attr && gbp.global_attr == sa.global_attr);
    ++compared;
  }
  std::size_t tapes = 0, relus = 0, negative = 0;
  for (int trial = 0; trial < 1000; ++trial, ++tapes) {
    const selftest::Case c = selftest::random_case(rng, {});
    const Target t = selftest::random_target(rng, c);
    Tape tape;
    const ForwardTrace tr = gn_forward(tape, c.graph, c.model);
    Tensor seed(tape.value(tr.output).shape());
    seed(t.kind == Target::Kind::Node ? t.node : 0, 0) = uniform(rng, -2.0, 2.0);
    const BackwardResult res = backward(tape, tr.output, seed, Guided{});
    for (std::size_t id = 0; id < tape.size(); ++id) {
      const PrimitiveRecord& r = tape.record(id);
      if (r.op != OpKind::Relu) continue;
      ++relus;
      // the ReLU is the sole consumer of its pre-activation
      for (double v : res.adjoint.at(r.inputs.front()).values()) negative += v < 0.0;
    }
  }
  return {mismatches == 0 && negative == 0,
          std::to_string(compared - mismatches) + "/" + std::to_string(compared) +
              " nonnegative networks GBP == signed SA; " + std::to_string(negative) + " negative entries below " +
              std::to_string(relus) + " ReLUs on " + std::to_string(tapes) + " tapes"};
}

// --- 4 -----------------------------------------------------------------------

Outcome infection_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(104);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < 1000; ++i) {
    infection::Config cfg = i % 2 ? infection::Config::eval(1, i) : infection::Config::train(1, i);
    cfg.p_sick = uniform(rng, 0.0, 0.5);
    cfg.p_immune = uniform(rng, 0.0, 0.5);
    cfg.p_virtual = uniform(rng, 0.0, 1.0);
    const Graph g = infection::dataset_graph(cfg, 0);
    agree += infection::labels_for(g) == oracle::infection_labels(g);
  }
  const double secs = seconds_since(t0);
  return {agree == 1000 && secs < 10.0, std::to_string(agree) + "/1000 graphs exact, " + fmt("%.2f s", secs)};
}

// --- 5 -----------------------------------------------------------------------

Outcome infection_learning() {
  const InfectionRun& run = infection_model(Reduce::Max);
  const double acc = node_accuracy(run.model, heldout_graphs());
  std::size_t largest = 0;
  for (const Graph& g : heldout_graphs()) largest = std::max(largest, g.num_nodes());
  return {acc >= 0.95 && run.train_seconds < 600.0,
          fmt("held-out node accuracy %.4f", acc) + " on 1000 graphs (largest " + std::to_string(largest) + " nodes), " +
              fmt("trained in %.1f s", run.train_seconds)};
}

// --- 6 -----------------------------------------------------------------------

/// Immune, healthy center 0 joined both ways to k sick leaves over non-virtual edges.
Graph star(std::size_t k, const std::vector<double>& leaf_noise, const std::vector<double>& edge_noise) {
  std::vector<std::vector<double>> nodes{{-1.0, 1.0, -1.0, -1.0}};
  std::vector<std::vector<double>> edges;
  std::vector<std::size_t> s, r;
  for (std::size_t i = 1; i <= k; ++i) {
    nodes.push_back({1.0, -1.0, leaf_noise[2 * i], leaf_noise[2 * i + 1]});
    s.push_back(i);
    r.push_back(0);
    edges.push_back({-1.0, edge_noise[2 * i]});
    s.push_back(0);
    r.push_back(i);
    edges.push_back({-1.0, edge_noise[2 * i + 1]});
  }
  return build_graph(nodes, edges, s, r);
}

Outcome pooling_corner_case() {
  const GnModel& max_model = infection_model(Reduce::Max).model;
  const GnModel& sum_model = infection_model(Reduce::Sum).model;
  Rng rng(106);
  std::size_t healthy = 0, monotone = 0;
  const int draws = 10;
  std::string logits;
  for (int d = 0; d < draws; ++d) {
    std::vector<double> leaf(40), edge(40);
    for (double& v : leaf) v = bernoulli(rng, 0.5) ? 1.0 : -1.0;
    for (double& v : edge) v = bernoulli(rng, 0.5) ? 1.0 : -1.0;
    double last = -std::numeric_limits<double>::infinity();
    bool inc = true, all_healthy = true;
    for (std::size_t k : {4u, 8u, 16u}) {
      const Graph g = star(k, leaf, edge);
      all_healthy = all_healthy && predict(g, max_model)[0] < 0.0;
      const double z = predict(g, sum_model)[0];
      inc = inc && z > last;
      last = z;
      if (d == 0) logits += (logits.empty() ? "" : ", ") + fmt("%.3g", z);
    }
    healthy += all_healthy;
    monotone += inc;
  }
  // Other training seeds, reported for context only.
  std::size_t sweep = 0;
  for (std::uint64_t seed = 1; seed <= kSweepSeeds; ++seed) {
    const GnModel& m = infection_model(Reduce::Sum, seed).model;
    const std::vector<double> none(40, -1.0);
    sweep += predict(star(4, none, none), m)[0] < predict(star(8, none, none), m)[0] &&
             predict(star(8, none, none), m)[0] < predict(star(16, none, none), m)[0];
  }
  return {healthy == static_cast<std::size_t>(draws) && monotone == static_cast<std::size_t>(draws),
          "max-pool center healthy for k=4,8,16 in " + std::to_string(healthy) + "/" + std::to_string(draws) +
              " draws; sum-pool logit increasing in " + std::to_string(monotone) + "/" + std::to_string(draws) +
              " (first draw " + logits + "); increasing for " + std::to_string(sweep) + "/" +
              std::to_string(kSweepSeeds) + " other training seeds"};
}

// --- 7 -----------------------------------------------------------------------

struct SingleSourceCase {
  const Graph* graph;
  std::size_t node, source;
};

/// Healthy, non-immune nodes whose only sick in-neighbor reaches them over one non-virtual edge.
std::vector<SingleSourceCase> single_source_cases(const std::vector<Graph>& graphs, std::size_t want) {
  std::vector<SingleSourceCase> out;
  for (const Graph& g : graphs) {
    for (std::size_t j = 0; j < g.num_nodes() && out.size() < want; ++j) {
      if (g.nodes(j, infection::kSick) > 0 || g.nodes(j, infection::kImmune) > 0) continue;
      std::set<std::size_t> sick_senders;
      std::size_t live = 0, source = 0;
      for (std::size_t k = 0; k < g.num_edges(); ++k) {
        if (g.receivers[k] != j || g.nodes(g.senders[k], infection::kSick) < 0) continue;
        sick_senders.insert(g.senders[k]);
        if (g.edges(k, infection::kVirtual) < 0) {
          ++live;
          source = g.senders[k];
        }
      }
      if (sick_senders.size() == 1 && live == 1) out.push_back({&g, j, source});
    }
    if (out.size() >= want) break;
  }
  return out;
}

Outcome explanation_sanity() {
  const auto cases = single_source_cases(heldout_graphs(), 100);
  auto rate = [&](const BackwardMode& rule, const GnModel& model) {
    std::size_t hits = 0;
    for (const SingleSourceCase& c : cases) {
      const Explanation e = lrp(model, *c.graph, Target::node_logit(c.node), rule);
      std::size_t best_row = 0, best_col = 0;
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < e.node_attr.rows(); ++i)
        for (std::size_t f = 0; f < e.node_attr.cols(); ++f)
          if (e.node_attr(i, f) > best) {
            best = e.node_attr(i, f);
            best_row = i;
            best_col = f;
          }
      hits += best > 0.0 && best_row == c.source && best_col == infection::kSick;
    }
    return static_cast<double>(hits) / static_cast<double>(std::max<std::size_t>(cases.size(), 1));
  };
  const GnModel& model = infection_model(Reduce::Max).model;
  const double signed_rate = rate(LrpEpsilon{1e-9, true}, model);
  const double zplus_rate = rate(LrpEpsilon{}, model);
  // Other training seeds, reported for context only.
  std::string sweep;
  for (std::uint64_t seed = 1; seed <= kSweepSeeds; ++seed)
    sweep += (sweep.empty() ? "" : " ") + fmt("%.0f", 100 * rate(LrpEpsilon{1e-9, true}, infection_model(Reduce::Max, seed).model));
  return {cases.size() == 100 && signed_rate >= 0.9,
          std::to_string(cases.size()) + " cases; neighbor 'sick' is the top positive attribution in " +
              fmt("%.0f%%", 100 * signed_rate) + " (epsilon rule over signed contributions; z+ rule: " +
              fmt("%.0f%%)", 100 * zplus_rate) + "; other training seeds: " + sweep + " %"};
}

// --- 8 -----------------------------------------------------------------------

Outcome pool_strategies() {
  bool ok = true;
  std::string fails;
  auto expect = [&](bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      fails += (fails.empty() ? "" : "; ") + what;
    }
  };
  const Tensor v = Tensor::from_rows({{3.0}, {1.0}, {2.0}});
  const std::vector<std::size_t> win{0};
  const std::vector<double> r{1.0};

  const Tensor naive = max_pool_redistribute(v, win, r, NaivePool{});
  expect(naive(0, 0) == 1.0 && naive(1, 0) == 0.0 && naive(2, 0) == 0.0, "naive routing");

  const Tensor lp = max_pool_redistribute(v, win, r, LpNormPool{2.0});
  expect(lp(0, 0) == 9.0 / 14.0 && lp(1, 0) == 1.0 / 14.0 && lp(2, 0) == 4.0 / 14.0, "Lp(2) shares");

  // two sources giving the same output when forced, one that does not
  const Tensor tie = Tensor::from_rows({{2.0}, {2.0 - 1e-12}, {0.5}});
  const PoolReplay replay{4.0, [&](std::size_t i, std::size_t) { return 2.0 * tie(i, 0); }};
  const Tensor search = max_pool_redistribute(tie, win, r, SearchPool{0.1}, &replay);
  expect(search(0, 0) == 0.5 && search(1, 0) == 0.5 && search(2, 0) == 0.0, "search 50/50");

  Rng rng(108);
  double worst_ulps = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 1 + uniform_index(rng, 8), d = 1 + uniform_index(rng, 4);
    Tensor x = Tensor::matrix(k, d);
    for (double& e : x.data()) e = uniform(rng, -3.0, 3.0);
    std::vector<std::size_t> w(d, 0);
    std::vector<double> rel(d);
    for (std::size_t c = 0; c < d; ++c) {
      for (std::size_t i = 1; i < k; ++i)
        if (x(i, c) > x(w[c], c)) w[c] = i;
      rel[c] = uniform(rng, -5.0, 5.0);
    }
    const PoolReplay rp{1.0, [&](std::size_t i, std::size_t c) { return 1.0 + 0.05 * (x(i, c) - x(w[c], c)); }};
    for (const MaxPoolStrategy& s : {MaxPoolStrategy{NaivePool{}}, MaxPoolStrategy{LpNormPool{2.0}},
                                     MaxPoolStrategy{LpNormPool{7.0}}, MaxPoolStrategy{SearchPool{0.1}},
                                     MaxPoolStrategy{SearchPool{0.1, true}}}) {
      const Tensor out = max_pool_redistribute(x, w, rel, s, &rp);
      for (std::size_t c = 0; c < d; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < k; ++i) total += out(i, c);
        worst_ulps = std::max(worst_ulps, std::abs(total - rel[c]) / (std::numeric_limits<double>::epsilon() * std::abs(rel[c])));
      }
    }
  }
  // Shares that are not powers of two cannot sum back to R bit for bit.
  expect(worst_ulps <= 4.0, fmt("column sums off by %.1f ulp", worst_ulps));
  return {ok, ok ? fmt("naive, Lp(2) = [9/14, 1/14, 4/14], search 50/50; column sums within %.1f ulp", worst_ulps) : fails};
}

// --- 9 -----------------------------------------------------------------------

Outcome solubility_learning() {
  const SolubilityRun& run = solubility_model();
  return {run.val_rmse <= 1.0 && run.train_seconds < 1800.0,
          fmt("validation RMSE %.3f", run.val_rmse) + fmt(", test RMSE %.3f", rmse(run.model, run.test)) +
              fmt(", trained in %.0f s", run.train_seconds)};
}

// --- 10 ----------------------------------------------------------------------

Outcome chemical_plausibility() {
  const SolubilityRun& run = solubility_model();
  auto stats = [&](const BackwardMode& rule, std::size_t& n_oh, std::size_t& n_fused) {
    double oh = 0.0, fused = 0.0;
    n_oh = n_fused = 0;
    for (std::size_t m = 0; m < run.test_smiles.size(); ++m) {
      const chem::Molecule mol = chem::prepare(run.test_smiles[m]);
      const Explanation e = lrp(run.model, run.test.graphs[m], Target::global_scalar(), rule);
      const EntityScores s = input_scores(e);
      const auto inc = mol.incident_bonds();
      for (std::size_t a = 0; a < mol.atoms.size(); ++a) {
        const chem::Atom& atom = mol.atoms[a];
        if (atom.element == "O" && !atom.aromatic && inc[a].size() == 1 && mol.implicit_h[a] == 1 &&
            mol.bonds[inc[a][0]].order == chem::BondOrder::Single) {
          oh += s.nodes[a];
          ++n_oh;
        }
        std::size_t aromatic_ring_bonds = 0;
        for (std::size_t b : inc[a])
          aromatic_ring_bonds += mol.bonds[b].order == chem::BondOrder::Aromatic && mol.bonds[b].in_ring;
        // a ring-fusion atom has three aromatic ring bonds
        if (atom.element == "C" && atom.aromatic && aromatic_ring_bonds >= 3) {
          fused += s.nodes[a];
          ++n_fused;
        }
      }
    }
    return std::pair{n_oh ? oh / static_cast<double>(n_oh) : 0.0, n_fused ? fused / static_cast<double>(n_fused) : 0.0};
  };
  std::size_t n_oh = 0, n_fused = 0, z_oh = 0, z_fused = 0;
  const auto [oh, fused] = stats(LrpEpsilon{1e-9, true}, n_oh, n_fused);
  const auto [zoh, zfused] = stats(LrpEpsilon{}, z_oh, z_fused);
  return {n_oh > 0 && n_fused > 0 && oh > 0.0 && fused < 0.0,
          fmt("hydroxyl O mean %+.4f", oh) + " (" + std::to_string(n_oh) + " atoms), " +
              fmt("fused aromatic C mean %+.4f", fused) + " (" + std::to_string(n_fused) +
              " atoms), epsilon rule over signed contributions; z+ rule: " + fmt("%+.4f", zoh) + fmt(" / %+.4f", zfused)};
}

// --- 11 ----------------------------------------------------------------------

Outcome parser_oracles() {
  bool ok = true;
  std::string fails;
  auto expect = [&](bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      fails += (fails.empty() ? "" : "; ") + what;
    }
  };
  expect(chem::prepare("CCO").implicit_h == std::vector<int>{3, 2, 1}, "ethanol hydrogens");
  const chem::Molecule benzene = chem::prepare("c1ccccc1");
  std::size_t good = 0;
  for (const chem::Bond& b : benzene.bonds) good += b.order == chem::BondOrder::Aromatic && b.in_ring && b.conjugated;
  expect(benzene.bonds.size() == 6 && good == 6, "benzene bonds");
  const chem::Molecule glucose = chem::prepare("OC[C@H]1OC(O)[C@H](O)[C@@H](O)[C@@H]1O");
  std::set<std::size_t> ring_atoms;
  std::size_t ring_bonds = 0;
  for (const chem::Bond& b : glucose.bonds)
    if (b.in_ring) {
      ++ring_bonds;
      ring_atoms.insert(b.a);
      ring_atoms.insert(b.b);
    }
  expect(glucose.atoms.size() == 12 && ring_bonds == 6 && ring_atoms.size() == 6, "glucose atoms and ring");

  const chem::EsolData data = chem::load_esol(std::string(GNX_DATA_DIR) + "/esol.csv");
  std::size_t molecules = 0, bonds = 0, wrong = 0;
  for (const auto& r : data.records) {
    const chem::Molecule m = chem::prepare(r.smiles);
    if (m.atoms.size() > 12) continue;
    const std::vector<bool> ref = oracle::ring_bonds_by_cycles(m);
    for (std::size_t k = 0; k < m.bonds.size(); ++k) wrong += m.bonds[k].in_ring != ref[k];
    bonds += m.bonds.size();
    ++molecules;
  }
  expect(wrong == 0 && molecules > 0, std::to_string(wrong) + " ring flags differ");
  return {ok, ok ? "ethanol [3,2,1], benzene 6/6, glucose 12 atoms + 6-ring, in_ring exact on " +
                       std::to_string(molecules) + " ESOL molecules (" + std::to_string(bonds) + " bonds)"
                 : fails};
}

// --- 12 ----------------------------------------------------------------------

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

std::pair<int, std::string> run_cli(const std::vector<std::string>& args, const fs::path& cwd) {
  std::string cmd = "cd " + quote(cwd.string()) + " && GE_LOG=quiet " + quote(GNX_CLI);
  for (const std::string& a : args) cmd += " " + quote(a);
  cmd += " 2>/dev/null";
  std::string out;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {-1, {}};
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) {
      std::ifstream in(e.path(), std::ios::binary);
      out[fs::relative(e.path(), dir).string()] = {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    }
  return out;
}

Outcome cli_determinism() {
  const fs::path root = fs::temp_directory_path() / ("gnx_acceptance_" + std::to_string(getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string d = root.string();
  const std::string esol = std::string(GNX_DATA_DIR) + "/esol.csv";
  const std::vector<std::vector<std::string>> commands{
      {"infection-generate", "--count", "300", "--seed", "5", "--out", d + "/inf"},
      {"infection-generate", "--count", "50", "--heldout", "--max-nodes", "60", "--seed", "6", "--out", d + "/inf_eval"},
      {"infection-train", "--data", d + "/inf", "--val", d + "/inf_eval", "--epochs", "2", "--seed", "5", "--out", d + "/inf_model"},
      {"infection-eval", "--model", d + "/inf_model/model.json", "--data", d + "/inf_eval", "--out", d + "/inf_evalout"},
      {"infection-explain", "--model", d + "/inf_model/model.json", "--graph", d + "/inf/graph_000007.json", "--node", "1",
       "--method", "lrp", "--maxpool-rule", "search", "--feature-table", "--seed", "5", "--out", d + "/inf_explain"},
      {"solubility-ingest", "--csv", esol, "--seed", "5", "--out", d + "/sol"},
      {"solubility-train", "--data", d + "/sol", "--epochs", "2", "--layers", "2", "--width", "16", "--seed", "5", "--out",
       d + "/sol_model"},
      {"solubility-predict", "--model", d + "/sol_model/model.json", "--smiles", "CCO", "--smiles", "CC", "--out",
       d + "/sol_predict"},
      {"solubility-explain", "--model", d + "/sol_model/model.json", "--smiles", "Oc1ccccc1", "--method", "gbp", "--out",
       d + "/sol_explain"},
      {"selftest", "--seed", "5", "--model", d + "/sol_model/model.json", "--out", d + "/selftest"}};
  std::vector<std::string> first_stdout, second_stdout;
  for (const auto& c : commands) {
    const auto [code, out] = run_cli(c, root);
    if (code != 0) return {false, c.front() + " exited with " + std::to_string(code)};
    first_stdout.push_back(out);
  }
  const auto first = snapshot(root);
  for (const auto& c : commands) second_stdout.push_back(run_cli(c, root).second);
  const auto second = snapshot(root);
  std::size_t differing = 0;
  std::string which;
  for (const auto& [name, bytes] : first) {
    const auto it = second.find(name);
    if (it == second.end() || it->second != bytes) {
      ++differing;
      which = name;
    }
  }
  differing += second.size() != first.size();
  std::size_t stdout_diff = 0;
  for (std::size_t i = 0; i < commands.size(); ++i) stdout_diff += first_stdout[i] != second_stdout[i];
  fs::remove_all(root);
  return {differing == 0 && stdout_diff == 0,
          std::to_string(commands.size()) + " commands rerun, " + std::to_string(first.size()) + " artifacts, " +
              std::to_string(differing) + " differ" + (which.empty() ? "" : " (e.g. " + which + ")") + ", " +
              std::to_string(stdout_diff) + " stdout differences"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient fidelity", gradient_fidelity},
      {"LRP conservation", lrp_conservation},
      {"guided backprop / SA relations", guided_relations},
      {"infection oracle equivalence", infection_oracle},
      {"infection learning", infection_learning},
      {"max-pool star corner case", pooling_corner_case},
      {"explanation sanity", explanation_sanity},
      {"max-pool strategies", pool_strategies},
      {"solubility learning", solubility_learning},
      {"chemical plausibility", chemical_plausibility},
      {"parser oracles", parser_oracles},
      {"CLI determinism", cli_determinism}};
  std::set<std::size_t> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoul(argv[i]));

  std::size_t failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.count(i + 1)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s  %2zu  %-32s %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
