#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dwf/core/error.hpp"
#include "dwf/core/matrix.hpp"
#include "dwf/core/rng.hpp"
#include "dwf/factorization.hpp"
#include "dwf/init.hpp"

namespace dwf {

enum class Activation { ReLU, Tanh, Identity };
enum class LossKind { SoftmaxCrossEntropy, MeanSquaredError };

/// Fully connected architecture. Hidden layers use `activation`; the output layer is linear.
struct MlpSpec {
  std::vector<std::size_t> layer_sizes;
  Activation activation = Activation::ReLU;
  LossKind loss = LossKind::SoftmaxCrossEntropy;

  void validate() const {
    require(layer_sizes.size() >= 2, ErrorKind::Config, "MlpSpec: need at least 2 layer sizes");
    for (std::size_t s : layer_sizes)
      require(s > 0, ErrorKind::Config, "MlpSpec: layer sizes must be positive");
  }
  std::size_t num_layers() const noexcept { return layer_sizes.size() - 1; }
  std::size_t input_size() const noexcept { return layer_sizes.front(); }
  std::size_t output_size() const noexcept { return layer_sizes.back(); }

  /// Weights plus biases.
  std::size_t parameter_count() const {
    validate();
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
      total += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
    return total;
  }

  static MlpSpec lenet_300_100() { return MlpSpec{{784, 300, 100, 10}}; }

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::ReLU: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Identity: return "identity";
  }
  return "relu";
}

inline std::string to_string(LossKind k) {
  return k == LossKind::SoftmaxCrossEntropy ? "softmax_cross_entropy" : "mse";
}

/// Plain network. Layer l maps (batch x n_l) to (batch x n_{l+1}) as X * W + b, so
/// weights are stored n_in x n_out and biases 1 x n_out.
struct DenseMlp {
  MlpSpec spec;
  std::vector<DenseMatrix> weights;
  std::vector<DenseMatrix> biases;

  /// Zero-initialized parameters with the right shapes.
  static DenseMlp zeros(const MlpSpec& spec) {
    spec.validate();
    DenseMlp m{spec, {}, {}};
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
      m.weights.emplace_back(spec.layer_sizes[l], spec.layer_sizes[l + 1]);
      m.biases.emplace_back(1, spec.layer_sizes[l + 1]);
    }
    return m;
  }

  /// Tensors in canonical order: layer0.weight, layer0.bias, layer1.weight, ...
  std::vector<DenseMatrix*> tensors() {
    std::vector<DenseMatrix*> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.push_back(&weights[l]);
      out.push_back(&biases[l]);
    }
    return out;
  }
  std::vector<const DenseMatrix*> tensors() const {
    std::vector<const DenseMatrix*> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.push_back(&weights[l]);
      out.push_back(&biases[l]);
    }
    return out;
  }

  friend bool operator==(const DenseMlp&, const DenseMlp&) = default;
};

/// Network whose every weight and bias is a depth-D factorization.
struct FactorizedMlp {
  MlpSpec spec;
  std::size_t depth = 2;
  std::vector<FactorizedParam> weights;
  std::vector<FactorizedParam> biases;

  static FactorizedMlp zeros(const MlpSpec& spec, std::size_t depth) {
    spec.validate();
    require(depth >= 2, ErrorKind::Config, "FactorizedMlp: depth must be >= 2");
    FactorizedMlp m{spec, depth, {}, {}};
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
      m.weights.emplace_back(spec.layer_sizes[l], spec.layer_sizes[l + 1], depth);
      m.biases.emplace_back(1, spec.layer_sizes[l + 1], depth);
    }
    return m;
  }

  std::vector<FactorizedParam*> tensors() {
    std::vector<FactorizedParam*> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.push_back(&weights[l]);
      out.push_back(&biases[l]);
    }
    return out;
  }
  std::vector<const FactorizedParam*> tensors() const {
    std::vector<const FactorizedParam*> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.push_back(&weights[l]);
      out.push_back(&biases[l]);
    }
    return out;
  }

  void validate() const {
    spec.validate();
    require(weights.size() == spec.num_layers() && biases.size() == spec.num_layers(),
            ErrorKind::Shape, "FactorizedMlp: layer count does not match spec");
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
      const auto& w = weights[l];
      const auto& b = biases[l];
      require(w.rows() == spec.layer_sizes[l] && w.cols() == spec.layer_sizes[l + 1] &&
                  b.rows() == 1 && b.cols() == spec.layer_sizes[l + 1],
              ErrorKind::Shape, "FactorizedMlp: parameter shapes do not chain at layer " +
                                    std::to_string(l));
      require(w.depth() == depth && b.depth() == depth, ErrorKind::Shape,
              "FactorizedMlp: all parameters must share one depth");
    }
  }

  friend bool operator==(const FactorizedMlp&, const FactorizedMlp&) = default;
};

/// Factorized network initialized with `scheme`. Each layer draws weights from
/// its own stream rng.child({l, 0}) and biases from rng.child({l, 1}).
inline FactorizedMlp init_factorized_mlp(const MlpSpec& spec, std::size_t depth,
                                         const InitScheme& scheme, VarianceRule rule,
                                         const SeededRng& rng) {
  FactorizedMlp m = FactorizedMlp::zeros(spec, depth);
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const LayerInitContext ctx{spec.layer_sizes[l], spec.layer_sizes[l + 1], rule};
    SeededRng wr = rng.child({l, 0});
    SeededRng br = rng.child({l, 1});
    m.weights[l] = FactorizedParam(ctx.n_in, ctx.n_out,
                                   sample_factor_weights(ctx, scheme, depth, ctx.n_in * ctx.n_out, wr));
    m.biases[l] = FactorizedParam(1, ctx.n_out, init_biases(scheme, depth, ctx.n_out, br));
  }
  return m;
}

/// Dense network with N(0, base_sigma^2) weights and zero biases.
inline DenseMlp init_dense_mlp(const MlpSpec& spec, VarianceRule rule, const SeededRng& rng) {
  DenseMlp m = DenseMlp::zeros(spec);
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const LayerInitContext ctx{spec.layer_sizes[l], spec.layer_sizes[l + 1], rule};
    SeededRng wr = rng.child({l, 0});
    const double sigma = base_sigma(ctx);
    for (double& v : m.weights[l].values()) v = wr.normal(0.0, sigma);
  }
  return m;
}

inline DenseMlp collapse_model(const FactorizedMlp& m) {
  DenseMlp out{m.spec, {}, {}};
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    out.weights.push_back(collapse(m.weights[l]));
    out.biases.push_back(collapse(m.biases[l]));
  }
  return out;
}

/// Per-layer pre-activations and activations; activations[0] is the input.
struct ForwardCache {
  std::vector<DenseMatrix> pre_activations;
  std::vector<DenseMatrix> activations;
};

namespace detail {

inline double activate(Activation a, double z) {
  switch (a) {
    case Activation::ReLU: return z > 0.0 ? z : 0.0;
    case Activation::Tanh: return std::tanh(z);
    case Activation::Identity: return z;
  }
  return z;
}

// Derivative in terms of the pre-activation z and the activation value y.
inline double activate_grad(Activation a, double z, double y) {
  switch (a) {
    case Activation::ReLU: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: return 1.0 - y * y;
    case Activation::Identity: return 1.0;
  }
  return 1.0;
}

inline void add_row_bias(DenseMatrix& z, const DenseMatrix& bias) {
  const auto b = bias.values();
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += b[j];
  }
}

}  // namespace detail

/// Logits for a batch (rows of x). Raises a numeric error naming the first
/// layer whose pre-activations are not finite.
inline DenseMatrix forward(const DenseMlp& m, const DenseMatrix& x, ForwardCache* cache = nullptr) {
  require(x.cols() == m.spec.input_size(), ErrorKind::Shape,
          "forward: input has " + std::to_string(x.cols()) + " features, network expects " +
              std::to_string(m.spec.input_size()));
  if (cache) {
    cache->pre_activations.clear();
    cache->activations.clear();
    cache->activations.push_back(x);
  }
  DenseMatrix a = x;
  const std::size_t layers = m.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    DenseMatrix z = matmul(a, m.weights[l]);
    detail::add_row_bias(z, m.biases[l]);
    if (!z.all_finite()) fail(ErrorKind::Numeric, "non-finite pre-activation in layer " + std::to_string(l), l);
    if (l + 1 == layers) {
      if (cache) cache->pre_activations.push_back(z);
      return z;
    }
    DenseMatrix y(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.size(); ++i)
      y.values()[i] = detail::activate(m.spec.activation, z.values()[i]);
    if (cache) {
      cache->pre_activations.push_back(std::move(z));
      cache->activations.push_back(y);
    }
    a = std::move(y);
  }
  return a;
}

inline DenseMatrix forward(const FactorizedMlp& m, const DenseMatrix& x,
                           ForwardCache* cache = nullptr) {
  return forward(collapse_model(m), x, cache);
}

struct LossResult {
  double loss = 0.0;
  DenseMatrix grad_logits;  // d(mean loss)/d(logits)
};

/// Mean per-sample loss and its gradient at the logits.
/// Cross-entropy expects one target distribution per row (usually one-hot);
/// MSE uses sum over outputs of squared error per sample.
inline LossResult loss_from_logits(const DenseMatrix& logits, const DenseMatrix& targets,
                                   LossKind kind, std::size_t output_layer = 0) {
  require(logits.same_shape(targets), ErrorKind::Shape,
          "loss: logits " + std::to_string(logits.rows()) + "x" + std::to_string(logits.cols()) +
              " vs targets " + std::to_string(targets.rows()) + "x" +
              std::to_string(targets.cols()));
  require(logits.rows() > 0, ErrorKind::Config, "loss: empty batch");
  const double inv_n = 1.0 / static_cast<double>(logits.rows());
  LossResult out{0.0, DenseMatrix(logits.rows(), logits.cols())};
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto z = logits.row(r);
    const auto t = targets.row(r);
    auto g = out.grad_logits.row(r);
    if (kind == LossKind::SoftmaxCrossEntropy) {
      const double zmax = *std::max_element(z.begin(), z.end());
      double sum = 0.0;
      for (std::size_t c = 0; c < z.size(); ++c) sum += std::exp(z[c] - zmax);
      const double log_sum = std::log(sum);
      for (std::size_t c = 0; c < z.size(); ++c) {
        const double log_p = z[c] - zmax - log_sum;
        if (t[c] != 0.0) out.loss -= t[c] * log_p;
        g[c] = (std::exp(log_p) - t[c]) * inv_n;
      }
    } else {
      for (std::size_t c = 0; c < z.size(); ++c) {
        const double diff = z[c] - t[c];
        out.loss += diff * diff;
        g[c] = 2.0 * diff * inv_n;
      }
    }
  }
  out.loss *= inv_n;
  if (!std::isfinite(out.loss)) {
    fail(ErrorKind::Numeric, "non-finite loss at output layer " + std::to_string(output_layer),
         output_layer);
  }
  return out;
}

/// Gradients of a dense network, same shapes as its weights and biases.
struct DenseGrads {
  std::vector<DenseMatrix> weights;
  std::vector<DenseMatrix> biases;
};

inline DenseGrads backward(const DenseMlp& m, const ForwardCache& cache, DenseMatrix grad_logits) {
  const std::size_t layers = m.weights.size();
  DenseGrads g;
  g.weights.resize(layers);
  g.biases.resize(layers);
  DenseMatrix dz = std::move(grad_logits);
  for (std::size_t l = layers; l-- > 0;) {
    g.weights[l] = matmul_tn(cache.activations[l], dz);
    g.biases[l] = column_sums(dz);
    if (l == 0) break;
    DenseMatrix da = matmul_nt(dz, m.weights[l]);
    const auto& z = cache.pre_activations[l - 1];
    const auto& y = cache.activations[l];
    for (std::size_t i = 0; i < da.size(); ++i)
      da.values()[i] *= detail::activate_grad(m.spec.activation, z.values()[i], y.values()[i]);
    dz = std::move(da);
  }
  return g;
}

struct DenseLossGrads {
  double loss = 0.0;
  DenseMatrix logits;
  DenseGrads grads;
};

inline DenseLossGrads loss_and_grads(const DenseMlp& m, const DenseMatrix& x,
                                     const DenseMatrix& targets) {
  ForwardCache cache;
  DenseMatrix logits = forward(m, x, &cache);
  LossResult lr = loss_from_logits(logits, targets, m.spec.loss, m.weights.size() - 1);
  DenseGrads grads = backward(m, cache, std::move(lr.grad_logits));
  return {lr.loss, std::move(logits), std::move(grads)};
}

/// Per-factor gradients; weights[l][d] is the gradient of factor d of layer l's weight.
struct FactorGrads {
  std::vector<std::vector<std::vector<double>>> weights;
  std::vector<std::vector<std::vector<double>>> biases;
};

struct FactorLossGrads {
  double loss = 0.0;
  DenseMatrix logits;
  FactorGrads grads;
};

/// Data-fit loss (no penalty) and gradients for every factor: dense backprop on
/// the collapsed network, then the product rule per parameter.
inline FactorLossGrads loss_and_grads(const FactorizedMlp& m, const DenseMatrix& x,
                                      const DenseMatrix& targets) {
  DenseLossGrads dense = loss_and_grads(collapse_model(m), x, targets);
  FactorLossGrads out{dense.loss, std::move(dense.logits), {}};
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    out.grads.weights.push_back(factor_gradients(dense.grads.weights[l].values(), m.weights[l]));
    out.grads.biases.push_back(factor_gradients(dense.grads.biases[l].values(), m.biases[l]));
  }
  return out;
}

/// All factor values in canonical order (tensor, then factor, then entry).
inline std::vector<double> flatten_factors(const FactorizedMlp& m) {
  std::vector<double> out;
  for (const FactorizedParam* p : m.tensors())
    for (const auto& f : p->factors()) out.insert(out.end(), f.begin(), f.end());
  return out;
}

/// Inverse of flatten_factors.
inline void unflatten_factors(FactorizedMlp& m, std::span<const double> flat) {
  std::size_t pos = 0;
  for (FactorizedParam* p : m.tensors()) {
    for (auto& f : p->factors()) {
      require(pos + f.size() <= flat.size(), ErrorKind::Shape, "unflatten_factors: too few values");
      std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), f.size(), f.begin());
      pos += f.size();
    }
  }
  require(pos == flat.size(), ErrorKind::Shape, "unflatten_factors: too many values");
}

/// Factor gradients flattened in the same order as flatten_factors.
inline std::vector<double> flatten_grads(const FactorGrads& g) {
  std::vector<double> out;
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    for (const auto& f : g.weights[l]) out.insert(out.end(), f.begin(), f.end());
    for (const auto& f : g.biases[l]) out.insert(out.end(), f.begin(), f.end());
  }
  return out;
}

/// Index of the largest logit per row (first index on ties).
inline std::vector<std::uint32_t> predict_labels(const DenseMatrix& logits) {
  std::vector<std::uint32_t> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto z = logits.row(r);
    out[r] = static_cast<std::uint32_t>(std::max_element(z.begin(), z.end()) - z.begin());
  }
  return out;
}

inline std::size_t count_correct(const DenseMatrix& logits, std::span<const std::uint32_t> labels) {
  const auto pred = predict_labels(logits);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i] ? 1 : 0;
  return correct;
}

/// Classification accuracy, evaluated in chunks of `chunk` rows.
inline double accuracy(const DenseMlp& m, const DenseMatrix& x,
                       std::span<const std::uint32_t> labels, std::size_t chunk = 2000) {
  require(x.rows() == labels.size(), ErrorKind::Shape, "accuracy: rows and labels differ");
  if (x.rows() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < x.rows(); start += chunk) {
    const std::size_t end = std::min(x.rows(), start + chunk);
    DenseMatrix part(end - start, x.cols(),
                     std::vector<double>(x.data() + start * x.cols(), x.data() + end * x.cols()));
    correct += count_correct(forward(m, part), labels.subspan(start, end - start));
  }
  return static_cast<double>(correct) / static_cast<double>(x.rows());
}

}  // namespace dwf
