#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dwf/core/error.hpp"
#include "dwf/core/matrix.hpp"
#include "dwf/core/rng.hpp"
#include "dwf/factorization.hpp"

namespace dwf {

inline double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

/// Sum of squared residuals y - X w.
inline double residual_sum_squares(const DenseMatrix& x, std::span<const double> y,
                                   std::span<const double> w) {
  require(x.rows() == y.size() && x.cols() == w.size(), ErrorKind::Shape,
          "residual_sum_squares: shape mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double r = y[i];
    for (std::size_t j = 0; j < x.cols(); ++j) r -= x(i, j) * w[j];
    total += r * r;
  }
  return total;
}

/// sum (y - X w)^2 + lambda * ||w||_1.
inline double lasso_objective(const DenseMatrix& x, std::span<const double> y,
                              std::span<const double> w, double lambda) {
  double l1 = 0.0;
  for (double v : w) l1 += std::abs(v);
  return residual_sum_squares(x, y, w) + lambda * l1;
}

/// 2 * ||X^T y||_inf: the smallest lambda for which w = 0 solves the lasso.
inline double lasso_lambda_max(const DenseMatrix& x, std::span<const double> y) {
  double m = 0.0;
  for (std::size_t j = 0; j < x.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) s += x(i, j) * y[i];
    m = std::max(m, std::abs(s));
  }
  return 2.0 * m;
}

struct LassoResult {
  std::vector<double> coef;
  double objective = 0.0;
  std::size_t sweeps = 0;
  std::vector<double> history;  // objective after each sweep, when requested
};

/// Cyclic coordinate descent for sum (y - X w)^2 + lambda ||w||_1:
///   w_j <- S(x_j^T r_j, lambda / 2) / (x_j^T x_j), r_j the partial residual.
/// Stops when the largest coefficient change in a sweep is below `tol`.
/// All-zero columns keep a zero coefficient.
inline LassoResult lasso_cd(const DenseMatrix& x, std::span<const double> y, double lambda,
                            double tol = 1e-12, std::size_t max_iter = 100000,
                            bool record_history = false) {
  require(x.rows() == y.size(), ErrorKind::Shape, "lasso_cd: X rows and y length differ");
  require(lambda >= 0.0, ErrorKind::Config, "lasso_cd: lambda must be >= 0");
  require(tol > 0.0, ErrorKind::Config, "lasso_cd: tol must be positive");
  const std::size_t n = x.rows();
  const std::size_t p = x.cols();
  const DenseMatrix xt = transpose(x);
  std::vector<double> col_sq(p, 0.0);
  for (std::size_t j = 0; j < p; ++j)
    for (double v : xt.row(j)) col_sq[j] += v * v;

  LassoResult out;
  out.coef.assign(p, 0.0);
  std::vector<double> r(y.begin(), y.end());
  for (std::size_t sweep = 1; sweep <= max_iter; ++sweep) {
    double max_change = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      if (col_sq[j] == 0.0) continue;
      const auto xj = xt.row(j);
      const double old = out.coef[j];
      double rho = 0.0;
      for (std::size_t i = 0; i < n; ++i) rho += xj[i] * r[i];
      rho += col_sq[j] * old;
      const double next = soft_threshold(rho, 0.5 * lambda) / col_sq[j];
      const double delta = next - old;
      if (delta != 0.0) {
        for (std::size_t i = 0; i < n; ++i) r[i] -= xj[i] * delta;
        out.coef[j] = next;
      }
      max_change = std::max(max_change, std::abs(delta));
    }
    out.sweeps = sweep;
    if (record_history) out.history.push_back(lasso_objective(x, y, out.coef, lambda));
    if (max_change < tol) {
      out.objective = lasso_objective(x, y, out.coef, lambda);
      return out;
    }
  }
  double rss = 0.0;
  for (double v : r) rss += v * v;
  fail(ErrorKind::Convergence, "lasso_cd: no convergence after " + std::to_string(max_iter) +
                                   " sweeps (residual sum of squares " + std::to_string(rss) + ")");
}

struct FactorizedLassoConfig {
  std::size_t depth = 2;
  std::size_t max_iter = 200000;
  double grad_tol = 1e-10;   // stop when the largest factor-gradient entry is below this
  double init_sigma = 0.5;   // factors start i.i.d. N(0, init_sigma^2)
  std::uint64_t seed = 0;
};

struct FactorizedLassoResult {
  std::vector<double> coef;  // collapsed product of the factors
  FactorizedParam factors;
  double objective = 0.0;    // sum (y - X w)^2 + (lambda / D) sum_d ||omega_d||^2
  double misalignment = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Full-batch gradient descent with Armijo backtracking on the factorized
/// objective sum (y - X w)^2 + (lambda / D) sum_d ||omega_d||^2, w the product of factors.
inline FactorizedLassoResult factorized_lasso_train(const DenseMatrix& x, std::span<const double> y,
                                                    double lambda,
                                                    const FactorizedLassoConfig& cfg = {}) {
  require(x.rows() == y.size(), ErrorKind::Shape, "factorized_lasso_train: X rows and y differ");
  require(lambda >= 0.0, ErrorKind::Config, "factorized_lasso_train: lambda must be >= 0");
  require(cfg.depth >= 2, ErrorKind::Config, "factorized_lasso_train: depth must be >= 2");
  const std::size_t p = x.cols();
  const std::size_t depth = cfg.depth;
  const double decay = lambda / static_cast<double>(depth);

  SeededRng rng(cfg.seed);
  std::vector<std::vector<double>> init(depth, std::vector<double>(p));
  for (auto& f : init)
    for (double& v : f) v = rng.normal(0.0, cfg.init_sigma);
  FactorizedParam params(1, p, std::move(init));

  auto objective = [&](const FactorizedParam& q) {
    const DenseMatrix w = collapse(q);
    return residual_sum_squares(x, y, w.values()) + decay * static_cast<double>(depth) * l2_factor_penalty(q);
  };
  auto residuals = [&](const FactorizedParam& q) {
    const DenseMatrix w = collapse(q);
    std::vector<double> r(y.begin(), y.end());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < p; ++j) r[i] -= x(i, j) * w.values()[j];
    return r;
  };
  auto gradient = [&](const FactorizedParam& q, const std::vector<double>& r) {
    std::vector<double> gw(p, 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < p; ++j) gw[j] -= 2.0 * x(i, j) * r[i];
    auto g = factor_gradients(gw, q);
    for (std::size_t d = 0; d < depth; ++d)
      for (std::size_t j = 0; j < p; ++j) g[d][j] += 2.0 * decay * q.factor(d)[j];
    return g;
  };
  // Objective change from q to q_new, accumulated from differences so it stays
  // accurate after the change falls below the rounding error of the objective.
  auto objective_change = [&](const FactorizedParam& q, const FactorizedParam& q_new,
                              const std::vector<double>& r) {
    std::vector<double> dw(p, 0.0);
    double dpen = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t d = 0; d < depth; ++d) {
        const double diff = q_new.factor(d)[j] - q.factor(d)[j];
        double term = diff;
        for (std::size_t k = 0; k < d; ++k) term *= q_new.factor(k)[j];
        for (std::size_t k = d + 1; k < depth; ++k) term *= q.factor(k)[j];
        dw[j] += term;
        dpen += diff * (q_new.factor(d)[j] + q.factor(d)[j]);
      }
    }
    double drss = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      double dr = 0.0;
      for (std::size_t j = 0; j < p; ++j) dr -= x(i, j) * dw[j];
      drss += dr * (2.0 * r[i] + dr);
    }
    return drss + decay * dpen;
  };

  FactorizedLassoResult out;
  double step = 1e-3;
  std::vector<double> r = residuals(params);
  for (std::size_t it = 1; it <= cfg.max_iter; ++it) {
    const auto g = gradient(params, r);
    double gmax = 0.0;
    double gsq = 0.0;
    for (const auto& gd : g)
      for (double v : gd) {
        gmax = std::max(gmax, std::abs(v));
        gsq += v * v;
      }
    out.iterations = it;
    if (gmax < cfg.grad_tol) {
      out.converged = true;
      break;
    }
    step *= 2.0;
    for (;;) {
      FactorizedParam trial = params;
      for (std::size_t d = 0; d < depth; ++d) {
        auto w = trial.factor(d);
        for (std::size_t j = 0; j < p; ++j) w[j] -= step * g[d][j];
      }
      const double change = objective_change(params, trial, r);
      if (std::isfinite(change) && change <= -0.5 * step * gsq) {
        params = std::move(trial);
        r = residuals(params);
        break;
      }
      step *= 0.5;
      if (step < 1e-300) {
        fail(ErrorKind::Diverged, "factorized_lasso_train: line search failed at iteration " +
                                      std::to_string(it), it);
      }
    }
  }
  const double f = objective(params);
  const DenseMatrix w = collapse(params);
  out.coef.assign(w.values().begin(), w.values().end());
  out.objective = f;
  out.misalignment = misalignment(params);
  out.factors = std::move(params);
  return out;
}

}  // namespace dwf
