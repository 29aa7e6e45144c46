#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "dwf/core/error.hpp"
#include "dwf/core/rng.hpp"

namespace dwf {

enum class VarianceRule { LeCun, Kaiming, Glorot };

struct LayerInitContext {
  std::size_t n_in = 1;
  std::size_t n_out = 1;
  VarianceRule rule = VarianceRule::LeCun;
};

/// Standard deviation of the unfactorized weight distribution for one layer.
inline double base_sigma(const LayerInitContext& ctx) {
  require(ctx.n_in >= 1 && ctx.n_out >= 1, ErrorKind::Config,
          "base_sigma: n_in and n_out must be >= 1");
  const double n_in = static_cast<double>(ctx.n_in);
  const double n_out = static_cast<double>(ctx.n_out);
  switch (ctx.rule) {
    case VarianceRule::LeCun: return std::sqrt(1.0 / n_in);
    case VarianceRule::Kaiming: return std::sqrt(2.0 / n_in);
    case VarianceRule::Glorot: return std::sqrt(2.0 / (n_in + n_out));
  }
  return std::sqrt(1.0 / n_in);
}

/// Every factor ~ N(0, sigma_w^2). Products shrink with depth.
struct StandardInit {};
/// Every factor ~ N(0, sigma_w^(2/D)), so the product has variance sigma_w^2.
struct VarMatchInit {};
/// VarMatch with each factor magnitude resampled into
/// (eps^(1/D), min(1, (2 sigma_w)^(1/D))). `eps` bounds the collapsed magnitude from below.
struct DwfTruncatedInit {
  double eps = 3e-3;
};
/// One N(0, sigma_w^2) draw per weight; every factor is its D-th root, sign on factor 0.
struct RootInit {};
/// Factors whose D-fold product is Gaussian, via a Gamma series cut at `k_max` terms.
struct GpfTruncatedInit {
  std::size_t k_max = 5;
};

using InitScheme =
    std::variant<StandardInit, VarMatchInit, DwfTruncatedInit, RootInit, GpfTruncatedInit>;

inline std::string scheme_name(const InitScheme& s) {
  switch (s.index()) {
    case 0: return "standard";
    case 1: return "varmatch";
    case 2: return "dwf";
    case 3: return "root";
    default: return "gpf";
  }
}

/// Bias standard deviation used for every scheme.
inline constexpr double kBiasSigma = 0.05;
/// Cap on resampling attempts per scalar in the truncated scheme.
inline constexpr std::size_t kMaxRejections = 10'000;

/// One factor draw from the truncated series representation of a Gaussian product factor.
inline double gpf_sample(std::size_t depth, double sigma_w, std::size_t k_max, SeededRng& rng) {
  require(depth >= 1, ErrorKind::Config, "gpf_sample: depth must be >= 1");
  require(sigma_w > 0.0, ErrorKind::Config, "gpf_sample: sigma_w must be positive");
  require(k_max >= 1, ErrorKind::Config, "gpf_sample: k_max must be >= 1");
  const double d = static_cast<double>(depth);
  const double shape = 1.0 / d;
  double exponent = std::log(2.0 * sigma_w * sigma_w) / (2.0 * d) - rng.gamma(shape);
  for (std::size_t k = 1; k <= k_max; ++k) {
    const double kd = static_cast<double>(k);
    exponent -= rng.gamma(shape) / (2.0 * kd + 1.0) - std::log1p(1.0 / kd) / (2.0 * d);
  }
  return rng.rademacher() * std::exp(exponent);
}

namespace detail {

inline void check_scheme(const InitScheme& scheme) {
  if (const auto* t = std::get_if<DwfTruncatedInit>(&scheme)) {
    require(t->eps > 0.0, ErrorKind::Config, "DwfTruncatedInit: eps must be positive");
  }
  if (const auto* g = std::get_if<GpfTruncatedInit>(&scheme)) {
    require(g->k_max >= 1, ErrorKind::Config, "GpfTruncatedInit: k_max must be >= 1");
  }
}

inline double truncated_factor(double sigma_l, double lo, double hi, SeededRng& rng) {
  for (std::size_t attempt = 0; attempt < kMaxRejections; ++attempt) {
    const double v = rng.normal(0.0, sigma_l);
    const double a = std::abs(v);
    if (lo < a && a < hi) return v;
  }
  fail(ErrorKind::Init, "DwfTruncatedInit: rejection sampling exceeded " +
                            std::to_string(kMaxRejections) +
                            " attempts; eps is too large for this sigma_w");
}

}  // namespace detail

/// D arrays of n factor values whose product approximates N(0, sigma_w^2)
/// (exactly so for VarMatch variance, Root and, in the series limit, GPF).
inline std::vector<std::vector<double>> sample_factor_weights(double sigma_w,
                                                              const InitScheme& scheme,
                                                              std::size_t depth, std::size_t n,
                                                              SeededRng& rng) {
  require(depth >= 2, ErrorKind::Config, "sample_factor_weights: depth must be >= 2");
  require(sigma_w > 0.0, ErrorKind::Config, "sample_factor_weights: sigma_w must be positive");
  detail::check_scheme(scheme);
  const double inv_d = 1.0 / static_cast<double>(depth);
  std::vector<std::vector<double>> out(depth, std::vector<double>(n));

  std::visit(
      [&](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, StandardInit>) {
          for (auto& f : out)
            for (auto& v : f) v = rng.normal(0.0, sigma_w);
        } else if constexpr (std::is_same_v<S, VarMatchInit>) {
          const double sigma_l = std::pow(sigma_w, inv_d);
          for (auto& f : out)
            for (auto& v : f) v = rng.normal(0.0, sigma_l);
        } else if constexpr (std::is_same_v<S, DwfTruncatedInit>) {
          const double sigma_l = std::pow(sigma_w, inv_d);
          const double lo = std::pow(s.eps, inv_d);
          const double hi = std::min(1.0, std::pow(2.0 * sigma_w, inv_d));
          require(lo < hi, ErrorKind::Init,
                  "DwfTruncatedInit: empty truncation interval (eps >= min(1, 2*sigma_w))");
          for (auto& f : out)
            for (auto& v : f) v = detail::truncated_factor(sigma_l, lo, hi, rng);
        } else if constexpr (std::is_same_v<S, RootInit>) {
          for (std::size_t j = 0; j < n; ++j) {
            const double w = rng.normal(0.0, sigma_w);
            const double a = std::abs(w);
            const double root = a == 0.0 ? 0.0 : std::exp(inv_d * std::log(a));
            for (auto& f : out) f[j] = root;
            if (w < 0.0) out[0][j] = -root;
          }
        } else {
          for (auto& f : out)
            for (auto& v : f) v = gpf_sample(depth, sigma_w, s.k_max, rng);
        }
      },
      scheme);
  return out;
}

inline std::vector<std::vector<double>> sample_factor_weights(const LayerInitContext& ctx,
                                                              const InitScheme& scheme,
                                                              std::size_t depth, std::size_t n,
                                                              SeededRng& rng) {
  return sample_factor_weights(base_sigma(ctx), scheme, depth, n, rng);
}

/// Factorized biases drawn with `scheme` at sigma = kBiasSigma.
inline std::vector<std::vector<double>> init_biases(const InitScheme& scheme, std::size_t depth,
                                                    std::size_t n, SeededRng& rng) {
  return sample_factor_weights(kBiasSigma, scheme, depth, n, rng);
}

}  // namespace dwf
