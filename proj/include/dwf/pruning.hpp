#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "dwf/core/error.hpp"
#include "dwf/core/rng.hpp"
#include "dwf/data.hpp"
#include "dwf/mask.hpp"
#include "dwf/metrics.hpp"
#include "dwf/model.hpp"
#include "dwf/optimizer.hpp"

namespace dwf {

struct CompressionTarget {
  double cr = 1.0;
};
struct SparsityTarget {
  double fraction = 0.0;
};
using PruneTarget = std::variant<CompressionTarget, SparsityTarget>;

inline double target_cr(const PruneTarget& t) {
  if (const auto* c = std::get_if<CompressionTarget>(&t)) {
    require(c->cr >= 1.0, ErrorKind::Config, "PruneTarget: compression ratio must be >= 1");
    return c->cr;
  }
  return cr_from_sparsity(std::get<SparsityTarget>(t).fraction);
}

/// Number of entries kept: round(total / cr). Zero is a config error.
inline std::size_t kept_count(std::size_t total, const PruneTarget& t) {
  const double cr = target_cr(t);
  const auto kept = static_cast<std::size_t>(std::llround(static_cast<double>(total) / cr));
  if (kept == 0) {
    fail(ErrorKind::Config, "prune target CR " + std::to_string(cr) + " keeps 0 of " +
                                std::to_string(total) + " parameters");
  }
  return std::min(kept, total);
}

/// Scores aligned with the canonical tensor order of a dense network.
using TensorScores = std::vector<std::vector<double>>;

/// Keeps the `kept` highest scores across all tensors. Ties are broken by global
/// position (tensor, then flat index) so lower positions are kept first.
inline PruneMask mask_from_scores(const std::vector<const DenseMatrix*>& shapes,
                                  const TensorScores& scores, std::size_t kept) {
  require(shapes.size() == scores.size(), ErrorKind::Shape, "mask_from_scores: tensor count mismatch");
  std::vector<double> flat;
  PruneMask mask;
  for (std::size_t t = 0; t < shapes.size(); ++t) {
    require(scores[t].size() == shapes[t]->size(), ErrorKind::Shape,
            "mask_from_scores: score size mismatch in tensor " + std::to_string(t));
    flat.insert(flat.end(), scores[t].begin(), scores[t].end());
    mask.tensors.push_back({shapes[t]->rows(), shapes[t]->cols(),
                            std::vector<std::uint8_t>(shapes[t]->size(), 0)});
  }
  require(kept >= 1 && kept <= flat.size(), ErrorKind::Config, "mask_from_scores: invalid kept count");
  std::vector<std::size_t> order(flat.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kept - 1), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return flat[a] > flat[b] || (flat[a] == flat[b] && a < b);
                   });
  // Everything before position kept-1 ranks no lower than the pivot.
  for (std::size_t i = 0; i < kept; ++i) {
    std::size_t g = order[i];
    for (auto& mt : mask.tensors) {
      if (g < mt.keep.size()) {
        mt.keep[g] = 1;
        break;
      }
      g -= mt.keep.size();
    }
  }
  return mask;
}

inline TensorScores magnitude_scores(const DenseMlp& m) {
  TensorScores s;
  for (const DenseMatrix* t : m.tensors()) {
    s.emplace_back(t->size());
    for (std::size_t j = 0; j < t->size(); ++j) s.back()[j] = std::abs(t->values()[j]);
  }
  return s;
}

/// Global magnitude pruning over all weights and biases.
inline PruneMask magnitude_mask(const DenseMlp& m, const PruneTarget& target) {
  const auto shapes = m.tensors();
  std::size_t total = 0;
  for (const auto* t : shapes) total += t->size();
  return mask_from_scores(shapes, magnitude_scores(m), kept_count(total, target));
}

/// Uniformly random subset of the target size.
inline PruneMask random_mask(const DenseMlp& m, const PruneTarget& target, SeededRng& rng) {
  const auto shapes = m.tensors();
  std::size_t total = 0;
  for (const auto* t : shapes) total += t->size();
  const std::size_t kept = kept_count(total, target);
  const auto perm = random_permutation(total, rng);
  PruneMask mask;
  for (const auto* t : shapes)
    mask.tensors.push_back({t->rows(), t->cols(), std::vector<std::uint8_t>(t->size(), 0)});
  for (std::size_t i = 0; i < kept; ++i) {
    std::size_t g = perm[i];
    for (auto& mt : mask.tensors) {
      if (g < mt.keep.size()) {
        mt.keep[g] = 1;
        break;
      }
      g -= mt.keep.size();
    }
  }
  return mask;
}

struct SnipScores {
  TensorScores scores;
  /// All gradient-times-weight products were zero; scores fell back to |w|.
  bool degenerate = false;
};

/// Connection sensitivity |g * w| from one minibatch at initialization.
inline SnipScores snip_scores(const DenseMlp& m, const DenseMatrix& inputs, const DenseMatrix& targets) {
  const DenseLossGrads lg = loss_and_grads(m, inputs, targets);
  SnipScores out;
  bool any = false;
  const auto params = m.tensors();
  for (std::size_t t = 0; t < params.size(); ++t) {
    const auto w = params[t]->values();
    const auto g = (t % 2 == 0 ? lg.grads.weights[t / 2] : lg.grads.biases[t / 2]).values();
    out.scores.emplace_back(w.size());
    for (std::size_t j = 0; j < w.size(); ++j) {
      out.scores.back()[j] = std::abs(g[j] * w[j]);
      any = any || out.scores.back()[j] != 0.0;
    }
  }
  if (!any) {
    out.degenerate = true;
    out.scores = magnitude_scores(m);
  }
  return out;
}

inline PruneMask snip_mask(const DenseMlp& m, const DenseMatrix& inputs, const DenseMatrix& targets,
                           const PruneTarget& target, bool* degenerate = nullptr) {
  const auto shapes = m.tensors();
  std::size_t total = 0;
  for (const auto* t : shapes) total += t->size();
  SnipScores s = snip_scores(m, inputs, targets);
  if (degenerate) *degenerate = s.degenerate;
  return mask_from_scores(shapes, s.scores, kept_count(total, target));
}

/// Synaptic-flow scores |w * dR/dw| with R = 1^T f(1) evaluated on the
/// absolute-valued (masked) network with linear activations; biases enter as |b|.
inline TensorScores synflow_scores(const DenseMlp& m, const PruneMask* mask = nullptr) {
  DenseMlp abs_net = m;
  abs_net.spec.activation = Activation::Identity;
  for (DenseMatrix* t : abs_net.tensors())
    for (double& v : t->values()) v = std::abs(v);
  if (mask) apply_mask(*mask, abs_net.tensors());
  ForwardCache cache;
  const DenseMatrix ones_in(1, m.spec.input_size(), 1.0);
  forward(abs_net, ones_in, &cache);
  const DenseGrads g = backward(abs_net, cache, DenseMatrix(1, m.spec.output_size(), 1.0));
  TensorScores scores;
  const auto params = abs_net.tensors();
  for (std::size_t t = 0; t < params.size(); ++t) {
    const auto w = params[t]->values();
    const auto gr = (t % 2 == 0 ? g.weights[t / 2] : g.biases[t / 2]).values();
    scores.emplace_back(w.size());
    for (std::size_t j = 0; j < w.size(); ++j) scores.back()[j] = w[j] * gr[j];
  }
  return scores;
}

/// Iterative SynFlow: at iteration i of N prune to CR^(i/N), recomputing scores
/// on the masked network. A weight matrix losing every entry is a pruning error.
inline PruneMask synflow_prune(const DenseMlp& m, const PruneTarget& target,
                               std::size_t iterations = 100) {
  require(iterations >= 1, ErrorKind::Config, "synflow_prune: iterations must be >= 1");
  const auto shapes = m.tensors();
  std::size_t total = 0;
  for (const auto* t : shapes) total += t->size();
  const double cr = target_cr(target);
  const std::size_t final_kept = kept_count(total, target);
  PruneMask mask = PruneMask::ones_like(shapes);
  for (std::size_t i = 1; i <= iterations; ++i) {
    TensorScores scores = synflow_scores(m, &mask);
    for (std::size_t t = 0; t < scores.size(); ++t)
      for (std::size_t j = 0; j < scores[t].size(); ++j)
        if (!mask.tensors[t].keep[j]) scores[t][j] = -1.0;
    const double cr_i = std::pow(cr, static_cast<double>(i) / static_cast<double>(iterations));
    const std::size_t kept = i == iterations ? final_kept
                                             : std::max(final_kept, kept_count(total, CompressionTarget{cr_i}));
    mask = mask_from_scores(shapes, scores, kept);
  }
  for (std::size_t t = 0; t < mask.tensors.size(); t += 2) {
    const auto& keep = mask.tensors[t].keep;
    if (std::none_of(keep.begin(), keep.end(), [](std::uint8_t k) { return k != 0; })) {
      fail(ErrorKind::Pruning, "synflow: layer " + std::to_string(t / 2) + " fully pruned at CR " +
                                   std::to_string(cr), t / 2);
    }
  }
  return mask;
}

/// Dense training from `init` with dropped entries frozen at zero.
inline DenseTrainResult apply_mask_and_train(DenseMlp init, const PruneMask& mask,
                                             const TrainConfig& cfg, const Dataset& train_set,
                                             const Dataset& val_set,
                                             const EpochCallback& on_epoch = {}) {
  return train_dense(std::move(init), cfg, train_set, val_set, DenseTrainOptions{0.0, &mask},
                     on_epoch);
}

/// Same, starting from the seeded dense init used by every baseline (stream seed/1).
inline DenseTrainResult apply_mask_and_train(const MlpSpec& spec, const PruneMask& mask,
                                             const TrainConfig& cfg, const Dataset& train_set,
                                             const Dataset& val_set,
                                             const EpochCallback& on_epoch = {}) {
  const SeededRng root(cfg.seed);
  return apply_mask_and_train(init_dense_mlp(spec, cfg.dense_init_rule, root.child({1})), mask, cfg,
                              train_set, val_set, on_epoch);
}

/// Dense init used by all baselines for a config; prune-at-init scores are computed on it.
inline DenseMlp baseline_init(const MlpSpec& spec, const TrainConfig& cfg) {
  const SeededRng root(cfg.seed);
  return init_dense_mlp(spec, cfg.dense_init_rule, root.child({1}));
}

struct CurvePoint {
  double cr = 1.0;
  double accuracy = 0.0;
  std::size_t kept = 0;
};

/// Magnitude-prune a trained network to each CR and evaluate without retraining.
inline std::vector<CurvePoint> posthoc_prune_curve(const DenseMlp& trained,
                                                   const std::vector<double>& cr_list,
                                                   const Dataset& eval_set) {
  require(std::is_sorted(cr_list.begin(), cr_list.end()), ErrorKind::Config,
          "posthoc_prune_curve: cr_list must be ascending");
  std::vector<CurvePoint> out;
  for (double cr : cr_list) {
    const PruneMask mask = magnitude_mask(trained, CompressionTarget{cr});
    DenseMlp pruned = trained;
    apply_mask(mask, pruned.tensors());
    out.push_back({cr, accuracy(pruned, eval_set.inputs, eval_set.labels), mask.kept()});
  }
  return out;
}

}  // namespace dwf
