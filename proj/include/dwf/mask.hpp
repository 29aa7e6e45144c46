#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dwf/core/error.hpp"
#include "dwf/core/matrix.hpp"

namespace dwf {

/// Keep (1) / drop (0) flags for each tensor of a dense network, in the
/// canonical tensor order layer0.weight, layer0.bias, layer1.weight, ...
struct PruneMask {
  struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> keep;

    friend bool operator==(const Tensor&, const Tensor&) = default;
  };
  std::vector<Tensor> tensors;

  std::size_t total() const noexcept {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.keep.size();
    return n;
  }
  std::size_t kept() const noexcept {
    std::size_t n = 0;
    for (const auto& t : tensors)
      for (auto k : t.keep) n += k;
    return n;
  }

  /// All-ones mask matching the given tensor shapes.
  template <typename TensorRange>
  static PruneMask ones_like(const TensorRange& params) {
    PruneMask m;
    for (const DenseMatrix* p : params) m.tensors.push_back({p->rows(), p->cols(), std::vector<std::uint8_t>(p->size(), 1)});
    return m;
  }

  friend bool operator==(const PruneMask&, const PruneMask&) = default;
};

/// Zeroes dropped entries in place.
inline void apply_mask(const PruneMask& mask, const std::vector<DenseMatrix*>& params) {
  require(mask.tensors.size() == params.size(), ErrorKind::Shape,
          "apply_mask: mask has " + std::to_string(mask.tensors.size()) + " tensors, model has " +
              std::to_string(params.size()));
  for (std::size_t t = 0; t < params.size(); ++t) {
    const auto& mt = mask.tensors[t];
    require(mt.rows == params[t]->rows() && mt.cols == params[t]->cols(), ErrorKind::Shape,
            "apply_mask: shape mismatch in tensor " + std::to_string(t));
    auto v = params[t]->values();
    for (std::size_t j = 0; j < v.size(); ++j)
      if (!mt.keep[j]) v[j] = 0.0;
  }
}

}  // namespace dwf
