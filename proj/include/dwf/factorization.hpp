#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dwf/core/error.hpp"
#include "dwf/core/matrix.hpp"

namespace dwf {

/// One logical weight tensor stored as D >= 2 same-shape factor arrays.
/// The effective (collapsed) parameter is the elementwise product of all factors.
class FactorizedParam {
 public:
  FactorizedParam() = default;

  /// All-zero factors.
  FactorizedParam(std::size_t rows, std::size_t cols, std::size_t depth)
      : rows_(rows), cols_(cols), factors_(depth, std::vector<double>(rows * cols, 0.0)) {
    check_depth();
  }

  FactorizedParam(std::size_t rows, std::size_t cols, std::vector<std::vector<double>> factors)
      : rows_(rows), cols_(cols), factors_(std::move(factors)) {
    check_depth();
    for (const auto& f : factors_) {
      require(f.size() == rows_ * cols_, ErrorKind::Shape,
              "FactorizedParam: factor length " + std::to_string(f.size()) +
                  " does not match shape " + std::to_string(rows_) + "x" +
                  std::to_string(cols_));
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return rows_ * cols_; }
  std::size_t depth() const noexcept { return factors_.size(); }

  std::span<const double> factor(std::size_t d) const { return factors_.at(d); }
  std::span<double> factor(std::size_t d) { return factors_.at(d); }
  const std::vector<std::vector<double>>& factors() const noexcept { return factors_; }
  std::vector<std::vector<double>>& factors() noexcept { return factors_; }

  friend bool operator==(const FactorizedParam&, const FactorizedParam&) = default;

 private:
  void check_depth() const {
    require(factors_.size() >= 2, ErrorKind::Config,
            "FactorizedParam: depth must be >= 2, got " + std::to_string(factors_.size()));
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::vector<double>> factors_;
};

/// Collapsed parameter: the elementwise product of all factors, same shape.
using CollapsedParam = DenseMatrix;

inline CollapsedParam collapse(const FactorizedParam& p) {
  std::vector<double> out(p.factor(0).begin(), p.factor(0).end());
  for (std::size_t d = 1; d < p.depth(); ++d) {
    const auto f = p.factor(d);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] *= f[j];
  }
  return CollapsedParam(p.rows(), p.cols(), std::move(out));
}

/// D^-1 * sum_d ||omega_d||_2^2. The regularization strength is applied by the caller.
inline double l2_factor_penalty(const FactorizedParam& p) {
  double total = 0.0;
  for (std::size_t d = 0; d < p.depth(); ++d)
    for (double v : p.factor(d)) total += v * v;
  return total / static_cast<double>(p.depth());
}

/// |w|^(2/D), with an explicit zero branch.
inline double quasi_norm_term(double w, std::size_t depth) {
  const double a = std::abs(w);
  if (a == 0.0) return 0.0;
  return std::exp((2.0 / static_cast<double>(depth)) * std::log(a));
}

/// sum_j |w_j|^(2/D).
inline double quasi_norm(std::span<const double> w, std::size_t depth) {
  require(depth >= 2, ErrorKind::Config, "quasi_norm: depth must be >= 2");
  double total = 0.0;
  for (double v : w) total += quasi_norm_term(v, depth);
  return total;
}

inline double quasi_norm(const CollapsedParam& w, std::size_t depth) {
  return quasi_norm(w.values(), depth);
}

/// Factor misalignment M = D^-1 sum_d ||omega_d||^2 - ||varpi||_{2/D}^{2/D}.
///
/// Accumulated per entry as (arithmetic mean of omega^2) - (geometric mean of
/// omega^2), each term non-negative by AM-GM up to rounding, so the total
/// does not suffer the cancellation of subtracting two large sums.
inline double misalignment(const FactorizedParam& p) {
  const std::size_t depth = p.depth();
  const double inv_d = 1.0 / static_cast<double>(depth);
  double total = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    double arith = 0.0;
    double log_sum = 0.0;
    bool has_zero = false;
    for (std::size_t d = 0; d < depth; ++d) {
      const double v = p.factor(d)[j];
      const double sq = v * v;
      arith += sq;
      if (sq == 0.0) {
        has_zero = true;
      } else {
        log_sum += std::log(sq);
      }
    }
    arith *= inv_d;
    const double geo = has_zero ? 0.0 : std::exp(log_sum * inv_d);
    total += arith - geo;
  }
  return total;
}

/// Minimum-norm factorization: every factor has magnitude |w_j|^(1/D), and a
/// negative sign is carried by the first factor.
inline FactorizedParam balanced_factorize(const CollapsedParam& w, std::size_t depth) {
  require(depth >= 2, ErrorKind::Config, "balanced_factorize: depth must be >= 2");
  std::vector<std::vector<double>> factors(depth, std::vector<double>(w.size()));
  const double inv_d = 1.0 / static_cast<double>(depth);
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double v = w.values()[j];
    const double a = std::abs(v);
    const double root = a == 0.0 ? 0.0 : std::exp(inv_d * std::log(a));
    for (std::size_t d = 0; d < depth; ++d) factors[d][j] = root;
    if (v < 0.0) factors[0][j] = -root;
  }
  return FactorizedParam(w.rows(), w.cols(), std::move(factors));
}

/// Chain rule through the product: dL/domega_d = grad_w * prod_{k != d} omega_k.
///
/// Uses prefix/suffix products, so zero factors are handled without division.
inline std::vector<std::vector<double>> factor_gradients(std::span<const double> grad_w,
                                                         const FactorizedParam& p) {
  require(grad_w.size() == p.size(), ErrorKind::Shape,
          "factor_gradients: gradient length " + std::to_string(grad_w.size()) +
              " does not match parameter size " + std::to_string(p.size()));
  const std::size_t depth = p.depth();
  const std::size_t n = p.size();
  std::vector<std::vector<double>> grads(depth, std::vector<double>(n));

  if (depth == 2) {
    const auto f0 = p.factor(0);
    const auto f1 = p.factor(1);
    for (std::size_t j = 0; j < n; ++j) {
      grads[0][j] = grad_w[j] * f1[j];
      grads[1][j] = grad_w[j] * f0[j];
    }
    return grads;
  }

  // grads[d] first holds prod_{k<d} omega_k (prefix), then is multiplied by the
  // running suffix prod_{k>d} omega_k.
  for (std::size_t j = 0; j < n; ++j) grads[0][j] = 1.0;
  for (std::size_t d = 1; d < depth; ++d) {
    const auto prev = p.factor(d - 1);
    for (std::size_t j = 0; j < n; ++j) grads[d][j] = grads[d - 1][j] * prev[j];
  }
  std::vector<double> suffix(grad_w.begin(), grad_w.end());
  for (std::size_t d = depth; d-- > 0;) {
    const auto f = p.factor(d);
    for (std::size_t j = 0; j < n; ++j) {
      grads[d][j] *= suffix[j];
      suffix[j] *= f[j];
    }
  }
  return grads;
}

}  // namespace dwf
