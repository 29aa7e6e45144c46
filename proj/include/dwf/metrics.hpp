#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dwf/factorization.hpp"
#include "dwf/model.hpp"

namespace dwf {

/// total / nonzero; +infinity when nothing is left.
inline double compression_ratio(std::size_t total, std::size_t nonzero) {
  if (nonzero == 0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(total) / static_cast<double>(nonzero);
}

inline double sparsity_from_cr(double cr) { return std::isinf(cr) ? 1.0 : 1.0 - 1.0 / cr; }

inline double cr_from_sparsity(double sparsity) {
  require(sparsity >= 0.0 && sparsity < 1.0, ErrorKind::Config, "sparsity must be in [0, 1)");
  return 1.0 / (1.0 - sparsity);
}

struct LayerSparsity {
  std::string name;
  std::size_t total = 0;
  std::size_t nonzero = 0;
  double cr = 1.0;
  /// Misalignment of the layer's weight and bias divided by its parameter count.
  std::optional<double> misalignment_normalized;
};

struct SparsityReport {
  std::size_t total_params = 0;
  std::size_t nonzero_params = 0;
  double compression_ratio = 1.0;
  double sparsity = 0.0;
  std::vector<LayerSparsity> layers;
  double collapsed_l2 = 0.0;  // Euclidean norm of all collapsed parameters
  std::optional<double> misalignment_total;
};

/// Exact counts over a thresholded dense network (layer l = weight + bias).
/// Misalignment fields are filled only when the factorized source is given.
inline SparsityReport sparsity_report(const DenseMlp& sparse, const FactorizedMlp* source = nullptr) {
  SparsityReport r;
  double sq = 0.0;
  double mis_total = 0.0;
  for (std::size_t l = 0; l < sparse.weights.size(); ++l) {
    LayerSparsity ls;
    ls.name = "layer" + std::to_string(l);
    for (const DenseMatrix* t : {&sparse.weights[l], &sparse.biases[l]}) {
      ls.total += t->size();
      for (double v : t->values()) {
        if (v != 0.0) ++ls.nonzero;
        sq += v * v;
      }
    }
    ls.cr = compression_ratio(ls.total, ls.nonzero);
    if (source) {
      const double m = misalignment(source->weights[l]) + misalignment(source->biases[l]);
      mis_total += m;
      ls.misalignment_normalized = m / static_cast<double>(ls.total);
    }
    r.total_params += ls.total;
    r.nonzero_params += ls.nonzero;
    r.layers.push_back(std::move(ls));
  }
  r.compression_ratio = compression_ratio(r.total_params, r.nonzero_params);
  r.sparsity = sparsity_from_cr(r.compression_ratio);
  r.collapsed_l2 = std::sqrt(sq);
  if (source) r.misalignment_total = mis_total;
  return r;
}

}  // namespace dwf
