#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dwf/core/error.hpp"

namespace dwf {

/// Row-major dense matrix of doubles.
///
/// Every kernel in this header accumulates each output element over the
/// inner dimension in ascending index order, so results are bit-identical to
/// the textbook triple loop (the build disables FP contraction). Kernels skip
/// exactly-zero multipliers; for finite operands that cannot change a sum that
/// starts at +0.0, so the only observable difference is that an Inf/NaN in the
/// other operand is not propagated through a zero.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    require(values_.size() == rows_ * cols_, ErrorKind::Shape,
            "DenseMatrix: value count " + std::to_string(values_.size()) +
                " does not match " + std::to_string(rows_) + "x" +
                std::to_string(cols_));
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> v;
    v.reserve(r * c);
    for (const auto& row : rows) {
      require(row.size() == c, ErrorKind::Shape, "DenseMatrix::from_rows: ragged rows");
      v.insert(v.end(), row.begin(), row.end());
    }
    return DenseMatrix(r, c, std::move(v));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {values_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  bool same_shape(const DenseMatrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  bool all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

namespace detail {

// out[m x n] += a[m x k] * b[k x n]; four output rows share each streamed row of b.
inline void gemm_nn_accumulate(const double* a, const double* b, double* out, std::size_t m,
                               std::size_t k, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    double* c0 = out + i * n;
    double* c1 = c0 + n;
    double* c2 = c1 + n;
    double* c3 = c2 + n;
    const double* a0 = a + i * k;
    const double* a1 = a0 + k;
    const double* a2 = a1 + k;
    const double* a3 = a2 + k;
    for (std::size_t p = 0; p < k; ++p) {
      const double s0 = a0[p], s1 = a1[p], s2 = a2[p], s3 = a3[p];
      if (s0 == 0.0 && s1 == 0.0 && s2 == 0.0 && s3 == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double bj = bp[j];
        c0[j] += s0 * bj;
        c1[j] += s1 * bj;
        c2[j] += s2 * bj;
        c3[j] += s3 * bj;
      }
    }
  }
  for (; i < m; ++i) {
    double* c = out + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = ai[p];
      if (s == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += s * bp[j];
    }
  }
}

}  // namespace detail

/// a * b.
inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    fail(ErrorKind::Shape, "matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                               " times " + std::to_string(b.rows()) + "x" +
                               std::to_string(b.cols()));
  }
  DenseMatrix out(a.rows(), b.cols());
  detail::gemm_nn_accumulate(a.data(), b.data(), out.data(), a.rows(), a.cols(), b.cols());
  return out;
}

/// transpose(a) * b, summing over the shared row index in ascending order.
inline DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) {
    fail(ErrorKind::Shape, "matmul_tn: row counts differ (" + std::to_string(a.rows()) + " vs " +
                               std::to_string(b.rows()) + ")");
  }
  const std::size_t m = a.rows();
  const std::size_t k = a.cols();
  const std::size_t n = b.cols();
  DenseMatrix out(k, n);
  double* c = out.data();
  for (std::size_t r = 0; r < m; ++r) {
    const double* ar = a.data() + r * k;
    const double* br = b.data() + r * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = ar[p];
      if (s == 0.0) continue;
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += s * br[j];
    }
  }
  return out;
}

inline DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

/// a * transpose(b).
inline DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) {
    fail(ErrorKind::Shape, "matmul_nt: column counts differ (" + std::to_string(a.cols()) +
                               " vs " + std::to_string(b.cols()) + ")");
  }
  return matmul(a, transpose(b));
}

/// Column sums, accumulated over rows in ascending order. Returns 1 x cols.
inline DenseMatrix column_sums(const DenseMatrix& a) {
  DenseMatrix out(1, a.cols());
  double* o = out.data();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* ar = a.data() + r * a.cols();
    for (std::size_t j = 0; j < a.cols(); ++j) o[j] += ar[j];
  }
  return out;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::Shape, "max_abs_diff: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace dwf
