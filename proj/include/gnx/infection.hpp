#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gnx/graph.hpp"
#include "gnx/io.hpp"
#include "gnx/rng.hpp"

namespace gnx::infection {

// Feature layout. Binary features are encoded as -1/+1.
inline constexpr std::size_t kSick = 0, kImmune = 1, kNodeNoise1 = 2, kNodeNoise2 = 3, kNodeDim = 4;
inline constexpr std::size_t kVirtual = 0, kEdgeNoise = 1, kEdgeDim = 2;

inline std::vector<std::string> node_feature_names() { return {"sick", "immune", "noise1", "noise2"}; }
inline std::vector<std::string> edge_feature_names() { return {"virtual", "noise"}; }

struct Config {
  std::size_t n_graphs = 1000;
  std::size_t max_nodes = 30;
  std::size_t min_attachment = 1;  // m drawn uniformly from [min, max] per graph
  std::size_t max_attachment = 2;
  double p_sick = 0.1;
  double p_immune = 0.1;
  double p_virtual = 0.3;
  /// When non-empty, each graph draws p_sick and p_immune independently from these levels.
  std::vector<double> prob_levels;
  std::uint64_t seed = 0;

  static Config train(std::size_t n, std::uint64_t seed) {
    Config c;
    c.n_graphs = n;
    c.seed = seed;
    return c;
  }
  /// Held-out graphs: up to 60 nodes, sick/immune rates drawn from {0.05, 0.1, 0.2}.
  static Config eval(std::size_t n, std::uint64_t seed) {
    Config c;
    c.n_graphs = n;
    c.max_nodes = 60;
    c.prob_levels = {0.05, 0.1, 0.2};
    c.seed = seed;
    return c;
  }
};

inline void validate(const Config& c) {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1]");
  };
  prob(c.p_sick, "p_sick");
  prob(c.p_immune, "p_immune");
  prob(c.p_virtual, "p_virtual");
  for (double p : c.prob_levels) prob(p, "probability level");
  if (c.min_attachment < 1 || c.max_attachment < c.min_attachment)
    throw ConfigError("attachment range must satisfy 1 <= min <= max");
  if (c.max_nodes < c.max_attachment + 1) throw ConfigError("max_nodes must be at least max attachment + 1");
}

inline nlohmann::json to_json(const Config& c) {
  return {{"n_graphs", c.n_graphs}, {"max_nodes", c.max_nodes},     {"min_attachment", c.min_attachment},
          {"max_attachment", c.max_attachment}, {"p_sick", c.p_sick}, {"p_immune", c.p_immune},
          {"p_virtual", c.p_virtual}, {"prob_levels", c.prob_levels}, {"seed", c.seed}};
}

struct Topology {
  std::vector<std::size_t> senders;
  std::vector<std::size_t> receivers;
};

/// Barabasi-Albert graph on n nodes: a clique on the first m+1 nodes, then
/// every new node attaches to m distinct existing nodes with probability
/// proportional to degree. Each undirected edge is emitted as a->b then b->a.
inline Topology generate_topology(std::size_t n, std::size_t m, Rng& rng) {
  if (m < 1 || n <= m) throw ConfigError("Barabasi-Albert needs n > m >= 1, got n=" + std::to_string(n) +
                                         " m=" + std::to_string(m));
  std::vector<std::pair<std::size_t, std::size_t>> undirected;
  std::vector<std::size_t> endpoints;  // each node repeated once per incident edge
  for (std::size_t a = 0; a <= m; ++a)
    for (std::size_t b = a + 1; b <= m; ++b) {
      undirected.emplace_back(a, b);
      endpoints.push_back(a);
      endpoints.push_back(b);
    }
  std::vector<std::size_t> chosen;
  for (std::size_t v = m + 1; v < n; ++v) {
    chosen.clear();
    while (chosen.size() < m) {
      const std::size_t t = endpoints[uniform_index(rng, endpoints.size())];
      if (std::find(chosen.begin(), chosen.end(), t) == chosen.end()) chosen.push_back(t);
    }
    for (std::size_t t : chosen) {
      undirected.emplace_back(t, v);
      endpoints.push_back(t);
      endpoints.push_back(v);
    }
  }
  Topology topo;
  for (auto [a, b] : undirected) {
    topo.senders.push_back(a);
    topo.receivers.push_back(b);
    topo.senders.push_back(b);
    topo.receivers.push_back(a);
  }
  return topo;
}

/// One step of the dynamics: a node is sick afterwards if it was sick, or if
/// a sick node reaches it through a non-virtual edge and it is not immune.
inline std::vector<bool> infection_step(const std::vector<bool>& sick, const std::vector<bool>& immune,
                                        std::span<const std::size_t> senders, std::span<const std::size_t> receivers,
                                        const std::vector<bool>& is_virtual) {
  if (immune.size() != sick.size() || receivers.size() != senders.size() || is_virtual.size() != senders.size())
    throw DimensionError("infection_step: inconsistent input lengths");
  std::vector<bool> next = sick;
  for (std::size_t k = 0; k < senders.size(); ++k) {
    const std::size_t s = senders[k], r = receivers[k];
    if (s >= sick.size() || r >= sick.size()) throw IndexError("infection_step: edge endpoint is not a node");
    if (sick[s] && !is_virtual[k] && !immune[r]) next[r] = true;
  }
  return next;
}

inline bool positive(double v) { return v > 0.0; }

/// Labels of an already-featurized infection graph.
inline std::vector<int> labels_for(const Graph& g) {
  std::vector<bool> sick(g.num_nodes()), immune(g.num_nodes()), virt(g.num_edges());
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    sick[i] = positive(g.nodes(i, kSick));
    immune[i] = positive(g.nodes(i, kImmune));
  }
  for (std::size_t k = 0; k < g.num_edges(); ++k) virt[k] = positive(g.edges(k, kVirtual));
  const auto next = infection_step(sick, immune, g.senders, g.receivers, virt);
  return {next.begin(), next.end()};
}

inline double pm(bool b) { return b ? 1.0 : -1.0; }

inline Graph sample_graph(const Config& cfg, Rng& rng) {
  validate(cfg);
  const std::size_t m = cfg.min_attachment + uniform_index(rng, cfg.max_attachment - cfg.min_attachment + 1);
  const std::size_t n = m + 1 + uniform_index(rng, cfg.max_nodes - m);
  double p_sick = cfg.p_sick, p_immune = cfg.p_immune;
  if (!cfg.prob_levels.empty()) {
    p_sick = cfg.prob_levels[uniform_index(rng, cfg.prob_levels.size())];
    p_immune = cfg.prob_levels[uniform_index(rng, cfg.prob_levels.size())];
  }
  Topology topo = generate_topology(n, m, rng);
  Graph g;
  g.nodes = Tensor::matrix(n, kNodeDim);
  for (std::size_t i = 0; i < n; ++i) {
    g.nodes(i, kSick) = pm(bernoulli(rng, p_sick));
    g.nodes(i, kImmune) = pm(bernoulli(rng, p_immune));
    g.nodes(i, kNodeNoise1) = rademacher(rng);
    g.nodes(i, kNodeNoise2) = rademacher(rng);
  }
  g.edges = Tensor::matrix(topo.senders.size(), kEdgeDim);
  for (std::size_t k = 0; k < topo.senders.size(); ++k) {
    g.edges(k, kVirtual) = pm(bernoulli(rng, cfg.p_virtual));
    g.edges(k, kEdgeNoise) = rademacher(rng);
  }
  g.senders = std::move(topo.senders);
  g.receivers = std::move(topo.receivers);
  g.labels = labels_for(g);
  return g;
}

/// Graph `index` of the dataset described by cfg; independent of the others.
inline Graph dataset_graph(const Config& cfg, std::size_t index) {
  Rng rng = substream(cfg.seed, index);
  return sample_graph(cfg, rng);
}

inline std::vector<Graph> generate_dataset(const Config& cfg) {
  validate(cfg);
  std::vector<Graph> out;
  out.reserve(cfg.n_graphs);
  for (std::size_t i = 0; i < cfg.n_graphs; ++i) out.push_back(dataset_graph(cfg, i));
  return out;
}

/// SHA-256 over the compact JSON of every graph, newline separated.
inline std::string content_hash(const std::vector<Graph>& graphs) {
  Sha256 h;
  for (const Graph& g : graphs) h.update(dump_graph(g)).update("\n");
  return h.hex();
}

/// Writes graph_NNNNNN.json files plus manifest.json; returns the content hash.
inline std::string write_dataset(const Config& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Sha256 h;
  for (std::size_t i = 0; i < cfg.n_graphs; ++i) {
    const std::string text = dump_graph(dataset_graph(cfg, i));
    h.update(text).update("\n");
    write_text_file((dir / graph_file_name(i)).string(), text + "\n");
  }
  const std::string hash = h.hex();
  nlohmann::json manifest{{"seed", cfg.seed}, {"config", to_json(cfg)}, {"count", cfg.n_graphs}, {"content_hash", hash}};
  write_text_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
  return hash;
}

/// Reads every graph listed by a dataset directory's manifest.
inline std::vector<Graph> read_dataset(const std::filesystem::path& dir) {
  const nlohmann::json manifest = read_json_file((dir / "manifest.json").string());
  const std::size_t count = manifest.at("count").get<std::size_t>();
  std::vector<Graph> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(load_graph((dir / graph_file_name(i)).string()));
  return out;
}

}  // namespace gnx::infection
