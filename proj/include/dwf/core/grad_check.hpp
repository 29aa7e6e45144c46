#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "dwf/core/error.hpp"

namespace dwf {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  std::vector<double> numeric;  // central-difference gradient
};

/// Compares an analytic gradient against central differences.
///
/// `f(x)` must return `std::pair<double, std::vector<double>>` (value, gradient).
/// Per component the error is |g_a - g_n| / max(1, |g_a|, |g_n|).
template <typename F>
GradCheckResult grad_check_detailed(F&& f, std::span<const double> x, double eps) {
  require(eps > 0.0, ErrorKind::Config, "grad_check: eps must be positive");
  std::vector<double> point(x.begin(), x.end());
  auto [value, analytic] = f(std::span<const double>(point));
  if (!std::isfinite(value)) fail(ErrorKind::Numeric, "grad_check: f(x) is not finite");
  require(analytic.size() == point.size(), ErrorKind::Shape,
          "grad_check: analytic gradient has wrong length");

  GradCheckResult result;
  result.numeric.resize(point.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + eps;
    const double plus = f(std::span<const double>(point)).first;
    point[i] = saved - eps;
    const double minus = f(std::span<const double>(point)).first;
    point[i] = saved;
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      fail(ErrorKind::Numeric, "grad_check: non-finite value near component", i);
    }
    const double numeric = (plus - minus) / (2.0 * eps);
    result.numeric[i] = numeric;
    const double scale = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
    const double err = std::abs(analytic[i] - numeric) / scale;
    if (err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_index = i;
    }
  }
  return result;
}

template <typename F>
double grad_check(F&& f, std::span<const double> x, double eps) {
  return grad_check_detailed(std::forward<F>(f), x, eps).max_relative_error;
}

}  // namespace dwf
