#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gnx/explain.hpp"
#include "gnx/graph.hpp"
#include "gnx/rng.hpp"

namespace gnx {

enum class Layout { Force, Circular, Provided };

struct RenderSpec {
  Layout layout = Layout::Force;
  std::optional<double> color_max;  // empty: max |score|
  bool feature_table = false;
  std::vector<std::pair<double, double>> coordinates;  // Layout::Provided, one per node
  std::vector<std::string> node_feature_names;         // optional, tooltips and table
  std::vector<std::string> edge_feature_names;
  std::uint64_t layout_seed = 0;
};

struct Rgb {
  int r = 255, g = 255, b = 255;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Signed map: 0 is white, +scale is pure red, -scale is pure blue.
inline Rgb signed_color(double value, double scale) {
  if (!(scale > 0.0) || value == 0.0) return {};
  const double t = std::min(std::abs(value) / scale, 1.0);
  const int fade = static_cast<int>(std::lround(255.0 * (1.0 - t)));
  return value > 0.0 ? Rgb{255, fade, fade} : Rgb{fade, fade, 255};
}

inline std::string hex(const Rgb& c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

namespace detail {

inline std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline void check_shapes(const Graph& g, const Explanation* e) {
  validate(g);
  if (!e) return;
  auto bad = [](const Tensor& t, std::size_t rows, std::size_t cols) {
    return t.rank() != 2 || t.rows() != rows || t.cols() != cols;
  };
  if (bad(e->node_attr, g.num_nodes(), g.node_dim()) || bad(e->edge_attr, g.num_edges(), g.edge_dim()))
    throw DimensionError("explanation " + shape_str(e->node_attr.shape()) + "/" + shape_str(e->edge_attr.shape()) +
                         " does not match graph nodes " + shape_str(g.nodes.shape()) + " edges " +
                         shape_str(g.edges.shape()));
  for (const LayerAttribution& l : e->per_layer)
    if (l.nodes.rank() != 2 || l.nodes.rows() != g.num_nodes() || l.edges.rank() != 2 ||
        l.edges.rows() != g.num_edges())
      throw DimensionError("per-layer attribution does not match the graph");
}

struct Scores {
  std::vector<double> nodes, edges;
  double scale = 0.0;
};

inline Scores scores(const Graph& g, const Explanation* e, const RenderSpec& spec) {
  Scores s;
  if (e) {
    EntityScores es = aggregate_layers(*e, LayerReduce::SignedSum);
    s.nodes = std::move(es.nodes);
    s.edges = std::move(es.edges);
  } else {
    s.nodes.assign(g.num_nodes(), 0.0);
    s.edges.assign(g.num_edges(), 0.0);
  }
  if (spec.color_max) {
    if (!(*spec.color_max > 0.0)) throw ConfigError("color scale must be positive");
    s.scale = *spec.color_max;
  } else {
    for (double v : s.nodes) s.scale = std::max(s.scale, std::abs(v));
    for (double v : s.edges) s.scale = std::max(s.scale, std::abs(v));
  }
  return s;
}

inline std::string feature_name(const std::vector<std::string>& names, const char* prefix, std::size_t i) {
  return i < names.size() ? names[i] : prefix + std::to_string(i);
}

/// "name=value" list of one entity's per-feature values.
inline std::string feature_list(std::span<const double> values, const std::vector<std::string>& names,
                                const char* prefix) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    out += feature_name(names, prefix, i) + "=" + fmt_num(values[i]);
  }
  return out;
}

inline std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  return out;
}

using Points = std::vector<std::pair<double, double>>;

inline Points circular_layout(std::size_t n) {
  Points p(n);
  const double pi = std::acos(-1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = 2.0 * pi * static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(n, 1));
    p[i] = {std::cos(a), std::sin(a)};
  }
  if (n == 1) p[0] = {0.0, 0.0};
  return p;
}

/// Fruchterman-Reingold on the unit square, 200 iterations, seeded start.
inline Points force_layout(const Graph& g, std::uint64_t seed) {
  const std::size_t n = g.num_nodes();
  Points p(n);
  Rng rng = substream(seed, 0);
  for (auto& [x, y] : p) {
    x = uniform01(rng);
    y = uniform01(rng);
  }
  if (n < 2) return p;
  const double k = std::sqrt(1.0 / static_cast<double>(n));
  constexpr int kIterations = 200;
  Points disp(n);
  for (int it = 0; it < kIterations; ++it) {
    const double temp = 0.1 * (1.0 - static_cast<double>(it) / kIterations);
    std::fill(disp.begin(), disp.end(), std::pair{0.0, 0.0});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        double dx = p[i].first - p[j].first, dy = p[i].second - p[j].second;
        const double d = std::max(std::hypot(dx, dy), 1e-9);
        const double f = k * k / d;
        dx = dx / d * f;
        dy = dy / d * f;
        disp[i].first += dx;
        disp[i].second += dy;
        disp[j].first -= dx;
        disp[j].second -= dy;
      }
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
      const std::size_t a = g.senders[e], b = g.receivers[e];
      if (a == b) continue;
      double dx = p[a].first - p[b].first, dy = p[a].second - p[b].second;
      const double d = std::max(std::hypot(dx, dy), 1e-9);
      const double f = d * d / k;
      dx = dx / d * f;
      dy = dy / d * f;
      disp[a].first -= dx;
      disp[a].second -= dy;
      disp[b].first += dx;
      disp[b].second += dy;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double d = std::max(std::hypot(disp[i].first, disp[i].second), 1e-9);
      const double step = std::min(d, temp);
      p[i].first = std::clamp(p[i].first + disp[i].first / d * step, 0.0, 1.0);
      p[i].second = std::clamp(p[i].second + disp[i].second / d * step, 0.0, 1.0);
    }
  }
  return p;
}

/// Positions scaled into [x0, x0 + w] x [y0, y0 + h].
inline Points fit(Points p, double x0, double y0, double w, double h) {
  if (p.empty()) return p;
  double lx = p[0].first, hx = lx, ly = p[0].second, hy = ly;
  for (auto [x, y] : p) {
    lx = std::min(lx, x);
    hx = std::max(hx, x);
    ly = std::min(ly, y);
    hy = std::max(hy, y);
  }
  const double sx = hx > lx ? w / (hx - lx) : 0.0, sy = hy > ly ? h / (hy - ly) : 0.0;
  const double s = (sx > 0.0 && sy > 0.0) ? std::min(sx, sy) : std::max(sx, sy);
  for (auto& [x, y] : p) {
    x = x0 + (hx > lx ? (x - lx) * s : w / 2.0);
    y = y0 + (hy > ly ? (y - ly) * s : h / 2.0);
  }
  return p;
}

inline Points layout(const Graph& g, const RenderSpec& spec) {
  switch (spec.layout) {
    case Layout::Circular: return circular_layout(g.num_nodes());
    case Layout::Provided:
      if (spec.coordinates.size() != g.num_nodes())
        throw DimensionError("layout has " + std::to_string(spec.coordinates.size()) + " coordinates for " +
                             std::to_string(g.num_nodes()) + " nodes");
      return spec.coordinates;
    case Layout::Force: break;
  }
  return force_layout(g, spec.layout_seed);
}

}  // namespace detail

/// Graphviz digraph. Fill colors follow the signed per-entity scores; the
/// tooltip lists per-feature attributions, or raw features without an explanation.
inline std::string to_dot(const Graph& g, const Explanation* e, const RenderSpec& spec = {}) {
  detail::check_shapes(g, e);
  const detail::Scores s = detail::scores(g, e, spec);
  const Tensor& nv = e ? e->node_attr : g.nodes;
  const Tensor& ev = e ? e->edge_attr : g.edges;
  std::ostringstream os;
  os << "digraph G {\n  node [style=filled, shape=circle];\n";
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    const std::string c = hex(signed_color(s.nodes[i], s.scale));
    os << "  n" << i << " [label=\"" << i << "\", fillcolor=\"" << c << "\", tooltip=\""
       << detail::dot_escape(detail::feature_list(nv.row(i), spec.node_feature_names, "f")) << "\"];\n";
  }
  for (std::size_t k = 0; k < g.num_edges(); ++k) {
    const Rgb rgb = signed_color(s.edges[k], s.scale);
    // white edges would vanish on a white page
    const std::string c = rgb == Rgb{} ? "#000000" : hex(rgb);
    os << "  n" << g.senders[k] << " -> n" << g.receivers[k] << " [color=\"" << c << "\", fillcolor=\"" << c
       << "\", tooltip=\"" << detail::dot_escape(detail::feature_list(ev.row(k), spec.edge_feature_names, "f"))
       << "\"];\n";
  }
  os << "}\n";
  return os.str();
}

inline std::string to_dot(const Graph& g, const Explanation& e, const RenderSpec& spec = {}) {
  return to_dot(g, &e, spec);
}

/// Standalone SVG 1.1 drawing with an optional feature bar table beneath.
inline std::string to_svg(const Graph& g, const Explanation* e, const RenderSpec& spec = {}) {
  detail::check_shapes(g, e);
  const detail::Scores s = detail::scores(g, e, spec);
  constexpr double kWidth = 640.0, kGraph = 480.0, kMargin = 40.0, kRadius = 12.0, kRow = 14.0, kBar = 40.0;
  const detail::Points pos =
      detail::fit(detail::layout(g, spec), kMargin, kMargin, kWidth - 2 * kMargin, kGraph - 2 * kMargin);

  const Tensor& nv = e ? e->node_attr : g.nodes;
  const Tensor& ev = e ? e->edge_attr : g.edges;
  const std::size_t table_rows = spec.feature_table ? g.num_nodes() + g.num_edges() + 2 : 0;
  const std::size_t max_feats = std::max(g.node_dim(), g.edge_dim());
  const double width = std::max(kWidth, 120.0 + static_cast<double>(max_feats) * (kBar + 4.0) + kMargin);
  const double height = kGraph + static_cast<double>(table_rows) * kRow + (table_rows ? kMargin : 0.0);

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << detail::fmt_num(width)
     << "\" height=\"" << detail::fmt_num(height) << "\" viewBox=\"0 0 " << detail::fmt_num(width) << ' '
     << detail::fmt_num(height) << "\">\n"
     << "<rect x=\"0\" y=\"0\" width=\"" << detail::fmt_num(width) << "\" height=\"" << detail::fmt_num(height)
     << "\" fill=\"#ffffff\"/>\n<g id=\"edges\">\n";
  for (std::size_t k = 0; k < g.num_edges(); ++k) {
    const Rgb rgb = signed_color(s.edges[k], s.scale);
    const std::string c = rgb == Rgb{} ? "#808080" : hex(rgb);
    const auto [x1, y1] = pos[g.senders[k]];
    const auto [x2, y2] = pos[g.receivers[k]];
    os << "<line x1=\"" << detail::fmt_num(x1) << "\" y1=\"" << detail::fmt_num(y1) << "\" x2=\""
       << detail::fmt_num(x2) << "\" y2=\"" << detail::fmt_num(y2) << "\" stroke=\"" << c
       << "\" stroke-width=\"2\"><title>"
       << detail::xml_escape("e" + std::to_string(k) + ": " +
                             detail::feature_list(ev.row(k), spec.edge_feature_names, "f"))
       << "</title></line>\n";
  }
  os << "</g>\n<g id=\"nodes\">\n";
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    const auto [x, y] = pos[i];
    os << "<circle cx=\"" << detail::fmt_num(x) << "\" cy=\"" << detail::fmt_num(y) << "\" r=\""
       << detail::fmt_num(kRadius) << "\" fill=\"" << hex(signed_color(s.nodes[i], s.scale))
       << "\" stroke=\"#000000\"><title>"
       << detail::xml_escape("v" + std::to_string(i) + ": " +
                             detail::feature_list(nv.row(i), spec.node_feature_names, "f"))
       << "</title></circle>\n<text x=\"" << detail::fmt_num(x) << "\" y=\"" << detail::fmt_num(y + 4.0)
       << "\" font-size=\"10\" text-anchor=\"middle\">" << i << "</text>\n";
  }
  os << "</g>\n";

  if (spec.feature_table) {
    double bar_scale = 0.0;
    for (double v : nv.values()) bar_scale = std::max(bar_scale, std::abs(v));
    for (double v : ev.values()) bar_scale = std::max(bar_scale, std::abs(v));
    double y = kGraph + kMargin / 2.0;
    os << "<g id=\"features\" font-size=\"10\">\n";
    auto header = [&](const std::vector<std::string>& names, const char* prefix, std::size_t dim) {
      for (std::size_t f = 0; f < dim; ++f)
        os << "<text x=\"" << detail::fmt_num(100.0 + static_cast<double>(f) * (kBar + 4.0)) << "\" y=\""
           << detail::fmt_num(y) << "\">" << detail::xml_escape(detail::feature_name(names, prefix, f))
           << "</text>\n";
      y += kRow;
    };
    auto bars = [&](const std::string& label, std::span<const double> values) {
      os << "<text x=\"10\" y=\"" << detail::fmt_num(y + 10.0) << "\">" << detail::xml_escape(label) << "</text>\n";
      for (std::size_t f = 0; f < values.size(); ++f) {
        const double len = bar_scale > 0.0 ? kBar * std::abs(values[f]) / bar_scale : 0.0;
        os << "<rect x=\"" << detail::fmt_num(100.0 + static_cast<double>(f) * (kBar + 4.0)) << "\" y=\""
           << detail::fmt_num(y + 2.0) << "\" width=\"" << detail::fmt_num(len) << "\" height=\"10\" fill=\""
           << hex(signed_color(values[f], bar_scale)) << "\"><title>" << detail::fmt_num(values[f])
           << "</title></rect>\n";
      }
      y += kRow;
    };
    header(spec.node_feature_names, "f", g.node_dim());
    for (std::size_t i = 0; i < g.num_nodes(); ++i) bars("v" + std::to_string(i), nv.row(i));
    header(spec.edge_feature_names, "f", g.edge_dim());
    for (std::size_t k = 0; k < g.num_edges(); ++k)
      bars("e" + std::to_string(k) + " " + std::to_string(g.senders[k]) + ">" + std::to_string(g.receivers[k]),
           ev.row(k));
    os << "</g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline std::string to_svg(const Graph& g, const Explanation& e, const RenderSpec& spec = {}) {
  return to_svg(g, &e, spec);
}

// --- feature-level JSON -----------------------------------------------------

/// Nearest double to the value printed with 9 significant digits.
inline double round9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return std::strtod(buf, nullptr);
}

inline Tensor round9(const Tensor& t) {
  Tensor out = t;
  for (double& v : out.data()) v = round9(v);
  return out;
}

/// The explanation as it reads back from its JSON form.
inline Explanation round9(const Explanation& e) {
  Explanation out = e;
  out.output = round9(e.output);
  out.node_attr = round9(e.node_attr);
  out.edge_attr = round9(e.edge_attr);
  if (out.global_attr) out.global_attr = round9(*e.global_attr);
  if (out.bias_sink) out.bias_sink = round9(*e.bias_sink);
  for (LayerAttribution& l : out.per_layer) {
    l.nodes = round9(l.nodes);
    l.edges = round9(l.edges);
  }
  return out;
}

namespace detail {

inline nlohmann::json rows_json(const Tensor& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (double v : t.row(r)) row.push_back(round9(v));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Tensor rows_from(const nlohmann::json& rows, std::size_t cols_if_empty) {
  return Tensor::from_rows(rows.get<std::vector<std::vector<double>>>(), cols_if_empty);
}

}  // namespace detail

/// Canonical JSON: sorted keys, every float rounded to 9 significant digits.
/// Edge widths are stored separately so that edge-free graphs keep their shape.
inline std::string to_feature_json(const Explanation& e) {
  nlohmann::json j;
  j["method"] = e.method;
  j["target"] = e.target.kind == Target::Kind::Node ? nlohmann::json{{"kind", "node"}, {"node", e.target.node}}
                                                    : nlohmann::json{{"kind", "global"}};
  j["output"] = round9(e.output);
  j["node_attr"] = detail::rows_json(e.node_attr);
  j["edge_attr"] = detail::rows_json(e.edge_attr);
  j["edge_dim"] = e.edge_attr.cols();
  if (e.global_attr) {
    nlohmann::json g = nlohmann::json::array();
    for (double v : e.global_attr->values()) g.push_back(round9(v));
    j["global_attr"] = std::move(g);
  }
  if (e.bias_sink) j["bias_sink"] = round9(*e.bias_sink);
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerAttribution& l : e.per_layer)
    layers.push_back({{"nodes", detail::rows_json(l.nodes)}, {"edges", detail::rows_json(l.edges)},
                      {"edge_dim", l.edges.cols()}});
  j["per_layer"] = std::move(layers);
  return j.dump(2) + "\n";
}

inline Explanation parse_feature_json(const std::string& text) {
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    Explanation e;
    e.method = j.at("method").get<std::string>();
    const auto& t = j.at("target");
    const std::string kind = t.at("kind").get<std::string>();
    if (kind == "node") e.target = Target::node_logit(t.at("node").get<std::size_t>());
    else if (kind == "global") e.target = Target::global_scalar();
    else throw DataError("unknown target kind '" + kind + "'");
    e.output = j.at("output").get<double>();
    e.node_attr = detail::rows_from(j.at("node_attr"), 0);
    e.edge_attr = detail::rows_from(j.at("edge_attr"), j.at("edge_dim").get<std::size_t>());
    if (j.contains("global_attr")) e.global_attr = Tensor::row_vector(j["global_attr"].get<std::vector<double>>());
    if (j.contains("bias_sink")) e.bias_sink = j["bias_sink"].get<double>();
    for (const auto& l : j.at("per_layer"))
      e.per_layer.push_back(
          {detail::rows_from(l.at("nodes"), 0), detail::rows_from(l.at("edges"), l.at("edge_dim").get<std::size_t>())});
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("explanation JSON: ") + ex.what());
  }
}

}  // namespace gnx
