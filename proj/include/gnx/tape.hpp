#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gnx/tensor.hpp"

namespace gnx {

enum class OpKind { Leaf, Linear, Relu, Concat, Split, SegmentSum, SegmentMean, SegmentMax, Gather, Add, Dropout };

inline const char* to_string(OpKind k) {
  switch (k) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Linear: return "linear";
    case OpKind::Relu: return "relu";
    case OpKind::Concat: return "concat";
    case OpKind::Split: return "split";
    case OpKind::SegmentSum: return "segment_sum";
    case OpKind::SegmentMean: return "segment_mean";
    case OpKind::SegmentMax: return "segment_max";
    case OpKind::Gather: return "gather";
    case OpKind::Add: return "elementwise_add";
    case OpKind::Dropout: return "dropout";
  }
  return "?";
}

/// Which entity a leaf stands for.
enum class Source { NodeFeatures, EdgeFeatures, GlobalFeatures, Parameter, Constant };

/// Handle to a value recorded on a tape.
struct Var {
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t id = npos;
  bool valid() const noexcept { return id != npos; }
  friend bool operator==(Var, Var) = default;
};

struct PrimitiveRecord {
  OpKind op = OpKind::Leaf;
  std::vector<std::size_t> inputs;
  Source source = Source::Constant;  // leaves only
  std::string label;
  std::shared_ptr<const std::vector<std::size_t>> index;  // gather rows or segment ids
  std::size_t n_segments = 0;
  std::size_t col_begin = 0, col_end = 0;  // split
  std::vector<std::size_t> argmax;         // segment max, one per output entry
  Tensor mask;                             // dropout keep-mask, already scaled by 1/(1-rate)
};

using IndexList = std::shared_ptr<const std::vector<std::size_t>>;

inline IndexList make_index(std::vector<std::size_t> v) {
  return std::make_shared<const std::vector<std::size_t>>(std::move(v));
}

/// Records a DAG of primitives in topological order together with every
/// forward value, so that it can be replayed backward under any mode and
/// re-evaluated forward with one intermediate value overridden.
class Tape {
 public:
  /// RAII label prefix for every primitive recorded while alive.
  class Scope {
   public:
    Scope(Tape& t, const std::string& name) : tape_(t), saved_(t.scope_) {
      t.scope_ = saved_.empty() ? name : saved_ + "." + name;
    }
    ~Scope() { tape_.scope_ = saved_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape& tape_;
    std::string saved_;
  };

  Var leaf(Tensor value, Source source, const std::string& name = {}) {
    if (!value.all_finite()) throw NumericError("leaf '" + name + "' contains non-finite values");
    PrimitiveRecord r;
    r.op = OpKind::Leaf;
    r.source = source;
    r.label = qualify(name.empty() ? "leaf" : name);
    return push(std::move(r), std::move(value));
  }

  Var linear(Var x, Var w, Var b) {
    PrimitiveRecord r = make(OpKind::Linear, {x.id, w.id, b.id});
    return push_evaluated(std::move(r));
  }
  Var relu(Var x) { return push_evaluated(make(OpKind::Relu, {x.id})); }
  Var add(Var a, Var b) { return push_evaluated(make(OpKind::Add, {a.id, b.id})); }

  /// Column-wise concatenation of matrices with equal row counts.
  Var concat(const std::vector<Var>& parts) {
    std::vector<std::size_t> ids;
    ids.reserve(parts.size());
    for (Var v : parts) ids.push_back(v.id);
    return push_evaluated(make(OpKind::Concat, std::move(ids)));
  }

  /// Columns [begin, end) of x.
  Var split(Var x, std::size_t begin, std::size_t end) {
    PrimitiveRecord r = make(OpKind::Split, {x.id});
    r.col_begin = begin;
    r.col_end = end;
    return push_evaluated(std::move(r));
  }

  /// Rows of x selected by `rows` (repeats allowed).
  Var gather(Var x, IndexList rows) {
    PrimitiveRecord r = make(OpKind::Gather, {x.id});
    r.index = std::move(rows);
    return push_evaluated(std::move(r));
  }

  Var segment_reduce(Var x, IndexList ids, std::size_t n_segments, Reduce mode) {
    const OpKind k = mode == Reduce::Sum    ? OpKind::SegmentSum
                     : mode == Reduce::Mean ? OpKind::SegmentMean
                                            : OpKind::SegmentMax;
    PrimitiveRecord r = make(k, {x.id});
    r.index = std::move(ids);
    r.n_segments = n_segments;
    return push_evaluated(std::move(r));
  }

  /// Multiplies x by a fixed mask (inverted dropout). The mask is part of the record.
  Var dropout(Var x, Tensor scaled_mask) {
    PrimitiveRecord r = make(OpKind::Dropout, {x.id});
    r.mask = std::move(scaled_mask);
    return push_evaluated(std::move(r));
  }

  std::size_t size() const noexcept { return records_.size(); }
  const PrimitiveRecord& record(std::size_t id) const { return records_.at(id); }
  const PrimitiveRecord& record(Var v) const { return records_.at(v.id); }
  const Tensor& value(std::size_t id) const { return values_.at(id); }
  const Tensor& value(Var v) const { return values_.at(v.id); }

  /// Re-evaluates everything downstream of `changed` with its value replaced
  /// and returns the new value of `output`. The tape itself is not modified.
  Tensor replay(Var changed, const Tensor& replacement, Var output) const {
    if (changed.id >= size() || output.id >= size()) throw IndexError("replay: variable not on tape");
    if (replacement.shape() != values_[changed.id].shape())
      throw DimensionError("replay: replacement " + shape_str(replacement.shape()) + " vs recorded " +
                           shape_str(values_[changed.id].shape()));
    if (output.id < changed.id) return values_[output.id];
    std::vector<std::optional<Tensor>> fresh(output.id - changed.id + 1);
    fresh[0] = replacement;
    auto current = [&](std::size_t id) -> const Tensor& {
      if (id >= changed.id && fresh[id - changed.id]) return *fresh[id - changed.id];
      return values_[id];
    };
    for (std::size_t id = changed.id + 1; id <= output.id; ++id) {
      const PrimitiveRecord& r = records_[id];
      bool dirty = false;
      for (std::size_t in : r.inputs) dirty = dirty || (in >= changed.id && fresh[in - changed.id]);
      if (!dirty) continue;
      std::vector<const Tensor*> in;
      for (std::size_t i : r.inputs) in.push_back(&current(i));
      fresh[id - changed.id] = evaluate(r, in, nullptr);
    }
    return current(output.id);
  }

  /// Forward rule of one primitive. Used both when recording and when replaying.
  static Tensor evaluate(const PrimitiveRecord& r, const std::vector<const Tensor*>& in,
                         std::vector<std::size_t>* argmax_out) {
    switch (r.op) {
      case OpKind::Leaf: throw std::logic_error("leaves are not evaluated");
      case OpKind::Linear: return linear_forward(*in[0], *in[1], *in[2]);
      case OpKind::Relu: return relu_forward(*in[0]);
      case OpKind::Add: {
        if (in[0]->shape() != in[1]->shape())
          throw DimensionError("elementwise_add: " + shape_str(in[0]->shape()) + " vs " +
                               shape_str(in[1]->shape()));
        Tensor y = *in[0];
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += (*in[1])[i];
        return y;
      }
      case OpKind::Concat: {
        const std::size_t rows = in.front()->rows();
        std::size_t cols = 0;
        for (const Tensor* t : in) {
          if (t->rank() != 2 || t->rows() != rows)
            throw DimensionError("concat: part " + shape_str(t->shape()) + " does not have " +
                                 std::to_string(rows) + " rows");
          cols += t->cols();
        }
        Tensor y = Tensor::matrix(rows, cols);
        for (std::size_t row = 0; row < rows; ++row) {
          auto dst = y.row(row).begin();
          for (const Tensor* t : in) dst = std::copy(t->row(row).begin(), t->row(row).end(), dst);
        }
        return y;
      }
      case OpKind::Split: {
        const Tensor& x = *in[0];
        if (r.col_begin > r.col_end || r.col_end > x.cols())
          throw DimensionError("split: columns [" + std::to_string(r.col_begin) + "," +
                               std::to_string(r.col_end) + ") outside " + shape_str(x.shape()));
        Tensor y = Tensor::matrix(x.rows(), r.col_end - r.col_begin);
        for (std::size_t row = 0; row < x.rows(); ++row)
          std::copy(x.row(row).begin() + static_cast<std::ptrdiff_t>(r.col_begin),
                    x.row(row).begin() + static_cast<std::ptrdiff_t>(r.col_end), y.row(row).begin());
        return y;
      }
      case OpKind::Gather: {
        const Tensor& x = *in[0];
        const auto& rows = *r.index;
        Tensor y = Tensor::matrix(rows.size(), x.cols());
        for (std::size_t k = 0; k < rows.size(); ++k) {
          if (rows[k] >= x.rows())
            throw IndexError("gather: row " + std::to_string(rows[k]) + " outside " + shape_str(x.shape()));
          std::copy(x.row(rows[k]).begin(), x.row(rows[k]).end(), y.row(k).begin());
        }
        return y;
      }
      case OpKind::SegmentSum:
      case OpKind::SegmentMean:
      case OpKind::SegmentMax: {
        const Reduce mode = r.op == OpKind::SegmentSum    ? Reduce::Sum
                            : r.op == OpKind::SegmentMean ? Reduce::Mean
                                                          : Reduce::Max;
        SegmentResult s = gnx::segment_reduce(*in[0], *r.index, r.n_segments, mode);
        if (argmax_out) *argmax_out = std::move(s.argmax);
        return std::move(s.values);
      }
      case OpKind::Dropout: {
        if (in[0]->shape() != r.mask.shape())
          throw DimensionError("dropout: mask " + shape_str(r.mask.shape()) + " vs input " +
                               shape_str(in[0]->shape()));
        Tensor y = *in[0];
        for (std::size_t i = 0; i < y.size(); ++i) y[i] *= r.mask[i];
        return y;
      }
    }
    throw std::logic_error("unknown primitive");
  }

 private:
  PrimitiveRecord make(OpKind k, std::vector<std::size_t> inputs) const {
    for (std::size_t id : inputs)
      if (id >= records_.size()) throw IndexError(std::string(to_string(k)) + ": input variable is not on this tape");
    PrimitiveRecord r;
    r.op = k;
    r.inputs = std::move(inputs);
    r.label = qualify(to_string(k));
    return r;
  }

  Var push_evaluated(PrimitiveRecord r) {
    std::vector<const Tensor*> in;
    in.reserve(r.inputs.size());
    for (std::size_t id : r.inputs) in.push_back(&values_[id]);
    Tensor y = evaluate(r, in, r.op == OpKind::SegmentMax ? &r.argmax : nullptr);
    if (!y.all_finite()) throw NumericError("non-finite output at " + r.label);
    return push(std::move(r), std::move(y));
  }

  Var push(PrimitiveRecord r, Tensor value) {
    records_.push_back(std::move(r));
    values_.push_back(std::move(value));
    return Var{records_.size() - 1};
  }

  std::string qualify(const std::string& name) const { return scope_.empty() ? name : scope_ + "." + name; }

  std::vector<PrimitiveRecord> records_;
  std::vector<Tensor> values_;
  std::string scope_;
};

}  // namespace gnx
