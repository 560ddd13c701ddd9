#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gnx/tensor.hpp"

namespace gnx {

/// Directed attributed graph: edge k goes from senders[k] to receivers[k].
/// Edge and node features are matrices with one row per entity; the optional
/// global block is a single row.
struct Graph {
  Tensor nodes;  // n_v x d_v
  Tensor edges;  // n_e x d_e
  std::vector<std::size_t> senders;
  std::vector<std::size_t> receivers;
  std::optional<Tensor> global;  // 1 x d_u
  std::optional<std::vector<int>> labels;

  std::size_t num_nodes() const { return nodes.rows(); }
  std::size_t num_edges() const { return edges.rows(); }
  std::size_t node_dim() const { return nodes.cols(); }
  std::size_t edge_dim() const { return edges.cols(); }
  std::size_t global_dim() const { return global ? global->cols() : 0; }

  friend bool operator==(const Graph&, const Graph&) = default;
};

/// Checks topology and feature consistency; throws on the first violation.
inline void validate(const Graph& g) {
  if (g.nodes.rank() != 2) throw DimensionError("node features must be a matrix, got " + shape_str(g.nodes.shape()));
  if (g.edges.rank() != 2) throw DimensionError("edge features must be a matrix, got " + shape_str(g.edges.shape()));
  if (g.senders.size() != g.edges.rows() || g.receivers.size() != g.edges.rows())
    throw DimensionError("graph has " + std::to_string(g.edges.rows()) + " edge feature rows but " +
                         std::to_string(g.senders.size()) + " senders and " + std::to_string(g.receivers.size()) +
                         " receivers");
  const std::size_t n = g.nodes.rows();
  for (std::size_t k = 0; k < g.senders.size(); ++k) {
    if (g.senders[k] >= n)
      throw IndexError("edge " + std::to_string(k) + " sender " + std::to_string(g.senders[k]) +
                       " is not a node id (graph has " + std::to_string(n) + " nodes)");
    if (g.receivers[k] >= n)
      throw IndexError("edge " + std::to_string(k) + " receiver " + std::to_string(g.receivers[k]) +
                       " is not a node id (graph has " + std::to_string(n) + " nodes)");
  }
  if (g.global && (g.global->rank() != 2 || g.global->rows() != 1))
    throw DimensionError("global features must be a single row, got " + shape_str(g.global->shape()));
  if (g.labels && g.labels->size() != n)
    throw DimensionError("graph has " + std::to_string(n) + " nodes but " + std::to_string(g.labels->size()) +
                         " labels");
  if (!g.nodes.all_finite() || !g.edges.all_finite() || (g.global && !g.global->all_finite()))
    throw NumericError("graph features contain non-finite values");
}

inline Graph build_graph(const std::vector<std::vector<double>>& nodes, const std::vector<std::vector<double>>& edges,
                         std::vector<std::size_t> senders, std::vector<std::size_t> receivers,
                         std::optional<std::vector<double>> global = std::nullopt, std::size_t edge_dim_if_empty = 0) {
  Graph g;
  g.nodes = Tensor::from_rows(nodes);
  g.edges = Tensor::from_rows(edges, edge_dim_if_empty);
  g.senders = std::move(senders);
  g.receivers = std::move(receivers);
  if (global) g.global = Tensor::row_vector(std::move(*global));
  validate(g);
  return g;
}

// --- JSON -------------------------------------------------------------------

inline nlohmann::json rows_to_json(const Tensor& t) {
  nlohmann::json a = nlohmann::json::array();
  for (std::size_t r = 0; r < t.rows(); ++r) a.push_back(std::vector<double>(t.row(r).begin(), t.row(r).end()));
  return a;
}

inline Tensor rows_from_json(const nlohmann::json& a, const char* what) {
  if (!a.is_array()) throw DataError(std::string(what) + " must be an array of rows");
  std::vector<std::vector<double>> rows;
  rows.reserve(a.size());
  for (const auto& r : a) rows.push_back(r.get<std::vector<double>>());
  return Tensor::from_rows(rows);
}

/// {"nodes", "edges", "senders", "receivers", "global", "labels"}
inline nlohmann::json to_json(const Graph& g) {
  nlohmann::json j;
  j["nodes"] = rows_to_json(g.nodes);
  j["edges"] = rows_to_json(g.edges);
  j["senders"] = g.senders;
  j["receivers"] = g.receivers;
  j["global"] = g.global ? nlohmann::json(g.global->values()) : nlohmann::json(nullptr);
  j["labels"] = g.labels ? nlohmann::json(*g.labels) : nlohmann::json(nullptr);
  return j;
}

inline Graph graph_from_json(const nlohmann::json& j) {
  try {
    Graph g;
    g.nodes = rows_from_json(j.at("nodes"), "nodes");
    g.edges = rows_from_json(j.at("edges"), "edges");
    g.senders = j.at("senders").get<std::vector<std::size_t>>();
    g.receivers = j.at("receivers").get<std::vector<std::size_t>>();
    if (j.contains("global") && !j["global"].is_null()) g.global = Tensor::row_vector(j["global"].get<std::vector<double>>());
    if (j.contains("labels") && !j["labels"].is_null()) g.labels = j["labels"].get<std::vector<int>>();
    validate(g);
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed graph JSON: ") + e.what());
  }
}

inline std::string dump_graph(const Graph& g) { return to_json(g).dump(); }

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << text;
  if (!out) throw DataError("failed writing " + path);
}

/// File name of graph `i` inside a dataset directory.
inline std::string graph_file_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "graph_%06zu.json", i);
  return buf;
}

inline Graph load_graph(const std::string& path) { return graph_from_json(read_json_file(path)); }

}  // namespace gnx
