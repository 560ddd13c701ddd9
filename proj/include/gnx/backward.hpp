#pragma once

#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gnx/tape.hpp"

namespace gnx {

struct Gradient {};
/// Gradient with negative upstream signals clipped at every ReLU.
struct Guided {};
/// Epsilon-stabilized relevance rule. By default only positive contributions
/// z+ = max(0, x_i w_ij) and b+ enter numerator and denominator; `signed_z`
/// switches to the conventional rule over signed contributions.
struct LrpEpsilon {
  double epsilon = 1e-16;
  bool signed_z = false;
};
/// Alpha-beta relevance rule with alpha + beta = 1.
struct LrpAlphaBeta {
  double alpha = 1.0;
  double beta = 0.0;
};

using BackwardMode = std::variant<Gradient, Guided, LrpEpsilon, LrpAlphaBeta>;

inline bool is_lrp(const BackwardMode& m) {
  return std::holds_alternative<LrpEpsilon>(m) || std::holds_alternative<LrpAlphaBeta>(m);
}

inline void validate(const BackwardMode& m) {
  if (const auto* e = std::get_if<LrpEpsilon>(&m); e && !(e->epsilon > 0.0))
    throw ConfigError("LRP epsilon must be > 0, got " + std::to_string(e->epsilon));
  if (const auto* ab = std::get_if<LrpAlphaBeta>(&m)) {
    if (!std::isfinite(ab->alpha) || !std::isfinite(ab->beta) || std::abs(ab->alpha + ab->beta - 1.0) > 1e-12)
      throw ConfigError("LRP alpha + beta must equal 1, got alpha=" + std::to_string(ab->alpha) +
                        " beta=" + std::to_string(ab->beta));
  }
}

/// Everything a max-pool relevance strategy needs about one segment_max node.
struct MaxPoolRequest {
  const Tape& tape;
  std::size_t node;
  const Tensor& input;                  // k x d pooled rows
  std::span<const std::size_t> ids;     // segment of every row
  std::size_t n_segments;
  std::span<const std::size_t> argmax;  // n_segments x d winners
  const Tensor& upstream;               // n_segments x d relevance
};

/// Returns the k x d relevance of the pooled rows.
using MaxPoolRule = std::function<Tensor(const MaxPoolRequest&)>;

/// All relevance of an output entry goes to its winning row.
inline Tensor route_to_winners(const MaxPoolRequest& q) {
  Tensor out(q.input.shape());
  const std::size_t d = q.input.cols();
  for (std::size_t s = 0; s < q.n_segments; ++s)
    for (std::size_t c = 0; c < d; ++c) {
      const std::size_t w = q.argmax[s * d + c];
      if (w != SegmentResult::npos) out(w, c) += q.upstream(s, c);
    }
  return out;
}

struct BackwardResult {
  /// Adjoint (gradient or relevance) of every tape value; zeros where nothing arrived.
  std::vector<Tensor> adjoint;
  /// Relevance absorbed by biases (LRP modes only).
  double bias_sink = 0.0;

  const Tensor& at(Var v) const { return adjoint.at(v.id); }
};

namespace detail {

inline double sign_matched(double denom, double eps) { return denom + (denom >= 0.0 ? eps : -eps); }

inline void accumulate(std::vector<Tensor>& adj, const Tape& tape, std::size_t id, const Tensor& delta) {
  Tensor& a = adj[id];
  if (a.empty() && a.shape().empty()) {
    a = delta;
    return;
  }
  if (a.shape() != delta.shape())
    throw DimensionError("backward: adjoint " + shape_str(delta.shape()) + " for " + tape.record(id).label +
                         " of shape " + shape_str(a.shape()));
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += delta[i];
}

/// Relevance rules for x W + b. Returns relevance of x; adds bias relevance to `sink`.
inline Tensor linear_relevance(const Tensor& x, const Tensor& w, const Tensor& b, const Tensor& r_out,
                               const BackwardMode& mode, double& sink) {
  const std::size_t rows = x.rows(), n = x.cols(), m = w.cols();
  Tensor r_in = Tensor::matrix(rows, n);
  std::vector<double> pos(m), neg(m);
  for (std::size_t row = 0; row < rows; ++row) {
    auto xr = x.row(row);
    auto rr = r_out.row(row);
    auto ri = r_in.row(row);
    if (const auto* eps = std::get_if<LrpEpsilon>(&mode)) {
      // scale_j = R_j / denominator_j
      for (std::size_t j = 0; j < m; ++j) {
        double denom = 0.0;
        if (eps->signed_z) {
          for (std::size_t i = 0; i < n; ++i) denom += xr[i] * w(i, j);
          denom = sign_matched(denom + b[j], eps->epsilon);
        } else {
          for (std::size_t i = 0; i < n; ++i) denom += std::max(0.0, xr[i] * w(i, j));
          denom += std::max(0.0, b[j]) + eps->epsilon;
        }
        pos[j] = rr[j] / denom;
        sink += (eps->signed_z ? b[j] : std::max(0.0, b[j])) * pos[j];
      }
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
          const double z = xr[i] * w(i, j);
          acc += (eps->signed_z ? z : std::max(0.0, z)) * pos[j];
        }
        ri[i] = acc;
      }
    } else {
      const auto& ab = std::get<LrpAlphaBeta>(mode);
      for (std::size_t j = 0; j < m; ++j) {
        double zp = 0.0, zn = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double z = xr[i] * w(i, j);
          (z > 0.0 ? zp : zn) += z;
        }
        const double dp = zp + std::max(0.0, b[j]);
        const double dn = zn + std::min(0.0, b[j]);
        // An empty positive (negative) side contributes nothing.
        pos[j] = dp > 0.0 ? ab.alpha * rr[j] / dp : 0.0;
        neg[j] = dn < 0.0 ? ab.beta * rr[j] / dn : 0.0;
        sink += std::max(0.0, b[j]) * pos[j] + std::min(0.0, b[j]) * neg[j];
      }
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
          const double z = xr[i] * w(i, j);
          acc += z > 0.0 ? z * pos[j] : z * neg[j];
        }
        ri[i] = acc;
      }
    }
  }
  return r_in;
}

inline double segment_epsilon(const BackwardMode& mode) {
  if (const auto* e = std::get_if<LrpEpsilon>(&mode)) return e->epsilon;
  return 1e-16;
}

}  // namespace detail

/// Replays the tape from `output` to the leaves under the requested mode.
/// For the LRP modes the seed is the relevance placed on the output, normally
/// the output value itself at the explained entry and zero elsewhere.
inline BackwardResult backward(const Tape& tape, Var output, const Tensor& seed, const BackwardMode& mode,
                               const MaxPoolRule& max_pool = {}) {
  validate(mode);
  if (output.id >= tape.size()) throw IndexError("backward: output variable is not on the tape");
  if (seed.shape() != tape.value(output).shape())
    throw DimensionError("backward: seed " + shape_str(seed.shape()) + " does not match output " +
                         shape_str(tape.value(output).shape()));
  const bool lrp = is_lrp(mode);
  const bool guided = std::holds_alternative<Guided>(mode);

  BackwardResult res;
  auto& adj = res.adjoint;
  adj.assign(tape.size(), Tensor{});
  adj[output.id] = seed;

  for (std::size_t id = output.id + 1; id-- > 0;) {
    if (adj[id].shape().empty()) continue;
    const PrimitiveRecord& rec = tape.record(id);
    const Tensor& up = adj[id];
    if (!up.all_finite()) throw NumericError("non-finite " + std::string(lrp ? "relevance" : "gradient") + " at " + rec.label);
    auto in = [&](std::size_t k) -> const Tensor& { return tape.value(rec.inputs[k]); };
    auto send = [&](std::size_t k, const Tensor& delta) { detail::accumulate(adj, tape, rec.inputs[k], delta); };

    switch (rec.op) {
      case OpKind::Leaf: break;
      case OpKind::Linear: {
        const Tensor& x = in(0);
        const Tensor& w = in(1);
        if (lrp) {
          send(0, detail::linear_relevance(x, w, in(2), up, mode, res.bias_sink));
        } else {
          Tensor dx = Tensor::matrix(x.rows(), x.cols());
          Tensor dw(w.shape());
          Tensor db(in(2).shape());
          if (x.rows() > 0) {
            if (x.cols() > 0) {
              as_matrix(dx).noalias() = as_matrix(up) * as_matrix(w).transpose();
              as_matrix(dw).noalias() = as_matrix(x).transpose() * as_matrix(up);
            }
            as_matrix(db).noalias() = as_matrix(up).colwise().sum();
          }
          send(0, dx);
          send(1, dw);
          send(2, db);
        }
        break;
      }
      case OpKind::Relu: {
        if (lrp) {
          send(0, up);
        } else {
          const Tensor& x = in(0);
          Tensor dx = up;
          for (std::size_t i = 0; i < dx.size(); ++i)
            if (!(x[i] > 0.0) || (guided && dx[i] < 0.0)) dx[i] = 0.0;
          send(0, dx);
        }
        break;
      }
      case OpKind::Add: {
        if (lrp) {
          const Tensor& a = in(0);
          const Tensor& b = in(1);
          const double eps = detail::segment_epsilon(mode);
          Tensor ra(a.shape()), rb(b.shape());
          for (std::size_t i = 0; i < a.size(); ++i) {
            const double s = up[i] / detail::sign_matched(a[i] + b[i], eps);
            ra[i] = a[i] * s;
            rb[i] = b[i] * s;
          }
          send(0, ra);
          send(1, rb);
        } else {
          send(0, up);
          send(1, up);
        }
        break;
      }
      case OpKind::Concat: {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < rec.inputs.size(); ++k) {
          const Tensor& part = in(k);
          Tensor d = Tensor::matrix(part.rows(), part.cols());
          for (std::size_t r = 0; r < part.rows(); ++r)
            std::copy_n(up.row(r).begin() + static_cast<std::ptrdiff_t>(offset), part.cols(), d.row(r).begin());
          offset += part.cols();
          send(k, d);
        }
        break;
      }
      case OpKind::Split: {
        const Tensor& x = in(0);
        Tensor d(x.shape());
        for (std::size_t r = 0; r < x.rows(); ++r)
          std::copy(up.row(r).begin(), up.row(r).end(), d.row(r).begin() + static_cast<std::ptrdiff_t>(rec.col_begin));
        send(0, d);
        break;
      }
      case OpKind::Gather: {
        const Tensor& x = in(0);
        Tensor d(x.shape());
        const auto& rows = *rec.index;
        for (std::size_t k = 0; k < rows.size(); ++k) {
          auto dst = d.row(rows[k]);
          auto src = up.row(k);
          for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
        }
        send(0, d);
        break;
      }
      case OpKind::SegmentSum:
      case OpKind::SegmentMean: {
        const Tensor& x = in(0);
        const auto& ids = *rec.index;
        Tensor d(x.shape());
        const std::size_t cols = x.cols();
        if (lrp) {
          Tensor totals = Tensor::matrix(rec.n_segments, cols);
          for (std::size_t k = 0; k < ids.size(); ++k)
            for (std::size_t c = 0; c < cols; ++c) totals(ids[k], c) += x(k, c);
          const double eps = detail::segment_epsilon(mode);
          for (std::size_t k = 0; k < ids.size(); ++k)
            for (std::size_t c = 0; c < cols; ++c)
              d(k, c) = x(k, c) / detail::sign_matched(totals(ids[k], c), eps) * up(ids[k], c);
        } else {
          const auto counts = segment_counts(ids, rec.n_segments);
          for (std::size_t k = 0; k < ids.size(); ++k) {
            const double scale = rec.op == OpKind::SegmentMean ? 1.0 / static_cast<double>(counts[ids[k]]) : 1.0;
            for (std::size_t c = 0; c < cols; ++c) d(k, c) = up(ids[k], c) * scale;
          }
        }
        send(0, d);
        break;
      }
      case OpKind::SegmentMax: {
        MaxPoolRequest q{tape, id, in(0), *rec.index, rec.n_segments, rec.argmax, up};
        send(0, lrp && max_pool ? max_pool(q) : route_to_winners(q));
        break;
      }
      case OpKind::Dropout: {
        if (lrp) {
          send(0, up);
        } else {
          Tensor d = up;
          for (std::size_t i = 0; i < d.size(); ++i) d[i] *= rec.mask[i];
          send(0, d);
        }
        break;
      }
      default: throw std::logic_error("backward: unknown primitive at " + rec.label);
    }
  }
  for (std::size_t id = 0; id < tape.size(); ++id)
    if (adj[id].shape().empty() && !tape.value(id).shape().empty()) adj[id] = Tensor(tape.value(id).shape());
  if (!std::isfinite(res.bias_sink)) throw NumericError("non-finite bias relevance");
  return res;
}

}  // namespace gnx
