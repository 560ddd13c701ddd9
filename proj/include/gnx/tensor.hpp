#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace gnx {

// Error taxonomy shared by every module. The CLI maps these onto exit codes.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

/// Dense row-major array of doubles. Most of the library works on rank-2
/// tensors (rows are graph entities, columns are features); rank-1 tensors
/// are used for bias vectors and the global feature block.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
  Tensor(Shape shape, const std::vector<double>& data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (data_.size() != shape_numel(shape_))
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_str(shape_));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }
  static Tensor from_rows(const std::vector<std::vector<double>>& rows, std::size_t cols_if_empty = 0) {
    const std::size_t cols = rows.empty() ? cols_if_empty : rows.front().size();
    Tensor t = matrix(rows.size(), cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != cols)
        throw DimensionError("ragged rows: row " + std::to_string(r) + " has " +
                             std::to_string(rows[r].size()) + " entries, expected " +
                             std::to_string(cols));
      std::copy(rows[r].begin(), rows[r].end(), t.row(r).begin());
    }
    return t;
  }
  static Tensor vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor({n}, std::move(v));
  }
  static Tensor row_vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor({1, n}, std::move(v));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const {
    require_rank2("rows");
    return shape_[0];
  }
  std::size_t cols() const {
    require_rank2("cols");
    return shape_[1];
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double> values() const { return {data_.begin(), data_.end()}; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * shape_[1], shape_[1]}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * shape_[1], shape_[1]}; }

  /// Same data, different shape; element counts must agree.
  Tensor reshaped(Shape s) const {
    if (shape_numel(s) != data_.size())
      throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
    Tensor t = *this;
    t.shape_ = std::move(s);
    return t;
  }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }
  double sum() const noexcept { return std::accumulate(data_.begin(), data_.end(), 0.0); }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  void require_rank2(const char* what) const {
    if (shape_.size() != 2)
      throw DimensionError(std::string(what) + "() needs a rank-2 tensor, got " + shape_str(shape_));
  }

  Shape shape_;
  // Fixed alignment keeps vectorized reductions bitwise reproducible across allocations.
  std::vector<double, Eigen::aligned_allocator<double>> data_;
};

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMajor>;
using ConstMatMap = Eigen::Map<const RowMajor>;

inline ConstMatMap as_matrix(const Tensor& t) {
  const auto r = static_cast<Eigen::Index>(t.rank() == 1 ? 1 : t.rows());
  const auto c = static_cast<Eigen::Index>(t.rank() == 1 ? t.size() : t.cols());
  return {t.data().data(), r, c};
}
inline MatMap as_matrix(Tensor& t) {
  const auto r = static_cast<Eigen::Index>(t.rank() == 1 ? 1 : t.rows());
  const auto c = static_cast<Eigen::Index>(t.rank() == 1 ? t.size() : t.cols());
  return {t.data().data(), r, c};
}

enum class Reduce { Sum, Mean, Max };

inline const char* to_string(Reduce r) {
  switch (r) {
    case Reduce::Sum: return "sum";
    case Reduce::Mean: return "mean";
    case Reduce::Max: return "max";
  }
  return "?";
}

inline Reduce parse_reduce(const std::string& s) {
  if (s == "sum") return Reduce::Sum;
  if (s == "mean") return Reduce::Mean;
  if (s == "max") return Reduce::Max;
  throw ConfigError("unknown pooling '" + s + "' (expected sum, mean or max)");
}

// ---------------------------------------------------------------------------
// Pure kernels. The tape records these; they are also usable on their own.
// ---------------------------------------------------------------------------

inline void check_linear_shapes(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1 || x.cols() != w.rows() || b.size() != w.cols())
    throw DimensionError("linear: input " + shape_str(x.shape()) + " is not conformable with weights " +
                         shape_str(w.shape()) + " and bias " + shape_str(b.shape()));
}

/// y = x W + b for every row of x.
inline Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  check_linear_shapes(x, w, b);
  Tensor y = Tensor::matrix(x.rows(), w.cols());
  if (x.rows() == 0) return y;
  auto ym = as_matrix(y);
  if (x.cols() > 0) ym.noalias() = as_matrix(x) * as_matrix(w);
  const auto bm = as_matrix(b);
  ym.rowwise() += bm.row(0);
  return y;
}

inline Tensor relu_forward(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
  return y;
}

struct SegmentResult {
  Tensor values;
  /// For max reductions: row index of the winner per output entry, or npos for empty segments.
  std::vector<std::size_t> argmax;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

inline void check_segments(std::span<const std::size_t> ids, std::size_t rows, std::size_t n_segments) {
  if (ids.size() != rows)
    throw DimensionError("segment_reduce: " + std::to_string(ids.size()) + " segment ids for " +
                         std::to_string(rows) + " rows");
  for (std::size_t k = 0; k < ids.size(); ++k)
    if (ids[k] >= n_segments)
      throw IndexError("segment_reduce: segment id " + std::to_string(ids[k]) + " at position " +
                       std::to_string(k) + " is outside [0, " + std::to_string(n_segments) + ")");
}

/// Per-segment reduction over rows. Empty segments produce zero rows in every
/// mode; max ties resolve to the lowest row index.
inline SegmentResult segment_reduce(const Tensor& values, std::span<const std::size_t> ids,
                                    std::size_t n_segments, Reduce mode) {
  if (values.rank() != 2) throw DimensionError("segment_reduce expects a matrix, got " + shape_str(values.shape()));
  check_segments(ids, values.rows(), n_segments);
  const std::size_t d = values.cols();
  SegmentResult out{Tensor::matrix(n_segments, d), {}};
  std::vector<std::size_t> counts(n_segments, 0);
  if (mode == Reduce::Max) out.argmax.assign(n_segments * d, SegmentResult::npos);
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const std::size_t s = ids[k];
    ++counts[s];
    auto src = values.row(k);
    auto dst = out.values.row(s);
    if (mode == Reduce::Max) {
      for (std::size_t c = 0; c < d; ++c) {
        std::size_t& win = out.argmax[s * d + c];
        if (win == SegmentResult::npos || src[c] > dst[c]) {
          win = k;
          dst[c] = src[c];
        }
      }
    } else {
      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
    }
  }
  if (mode == Reduce::Mean)
    for (std::size_t s = 0; s < n_segments; ++s)
      if (counts[s] > 1)
        for (double& v : out.values.row(s)) v /= static_cast<double>(counts[s]);
  return out;
}

inline std::vector<std::size_t> segment_counts(std::span<const std::size_t> ids, std::size_t n_segments) {
  std::vector<std::size_t> counts(n_segments, 0);
  for (std::size_t s : ids) ++counts[s];
  return counts;
}

/// Central differences of a scalar function, one coordinate at a time.
inline Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                         double h = 1e-5) {
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = probe[i];
    probe[i] = x0 + h;
    const double fp = f(probe);
    probe[i] = x0 - h;
    const double fm = f(probe);
    probe[i] = x0;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

}  // namespace gnx
