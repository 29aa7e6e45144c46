#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "dwf/core/error.hpp"
#include "dwf/core/rng.hpp"
#include "dwf/data.hpp"
#include "dwf/factorization.hpp"
#include "dwf/init.hpp"
#include "dwf/mask.hpp"
#include "dwf/metrics.hpp"
#include "dwf/model.hpp"

namespace dwf {

struct ConstantLr {
  double eta0 = 0.1;
};
/// eta0 * gamma^(number of milestones <= current epoch); epochs count from 0.
struct StepDecayLr {
  double eta0 = 0.1;
  std::vector<std::size_t> milestones;
  double gamma = 0.1;
};
/// 0.5 * eta0 * (1 + cos(pi * t / T)) per step. total_steps == 0 means
/// epochs * steps_per_epoch, resolved when training starts.
struct CosineLr {
  double eta0 = 0.15;
  std::size_t total_steps = 0;
};

using LrSchedule = std::variant<ConstantLr, StepDecayLr, CosineLr>;

inline void validate(const LrSchedule& s) {
  std::visit(
      [](const auto& v) {
        using S = std::decay_t<decltype(v)>;
        require(v.eta0 > 0.0, ErrorKind::Config, "LrSchedule: eta0 must be positive");
        if constexpr (std::is_same_v<S, StepDecayLr>) {
          require(v.gamma > 0.0 && v.gamma < 1.0, ErrorKind::Config,
                  "StepDecayLr: gamma must be in (0, 1)");
          for (std::size_t i = 1; i < v.milestones.size(); ++i)
            require(v.milestones[i] > v.milestones[i - 1], ErrorKind::Config,
                    "StepDecayLr: milestones must be strictly increasing");
        }
      },
      s);
}

/// Learning rate at optimizer step t. Steps past a cosine horizon clamp to its final value.
inline double lr_at(const LrSchedule& s, std::size_t step, std::size_t steps_per_epoch = 1) {
  return std::visit(
      [&](const auto& v) -> double {
        using S = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<S, ConstantLr>) {
          return v.eta0;
        } else if constexpr (std::is_same_v<S, StepDecayLr>) {
          const std::size_t epoch = step / std::max<std::size_t>(steps_per_epoch, 1);
          double lr = v.eta0;
          for (std::size_t m : v.milestones)
            if (m <= epoch) lr *= v.gamma;
          return lr;
        } else {
          require(v.total_steps > 0, ErrorKind::Config, "CosineLr: total_steps is unresolved");
          const std::size_t t = std::min(step, v.total_steps);
          return 0.5 * v.eta0 *
                 (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) /
                                 static_cast<double>(v.total_steps)));
        }
      },
      s);
}

inline LrSchedule resolve_schedule(LrSchedule s, std::size_t total_steps) {
  if (auto* c = std::get_if<CosineLr>(&s); c && c->total_steps == 0) c->total_steps = total_steps;
  return s;
}

inline constexpr double kFloat32Epsilon = static_cast<double>(std::numeric_limits<float>::epsilon());

struct TrainConfig {
  std::size_t depth = 2;
  double lambda = 0.0;
  std::size_t epochs = 30;
  std::size_t batch_size = 256;
  double momentum = 0.9;
  LrSchedule schedule = CosineLr{0.15, 0};
  InitScheme init = DwfTruncatedInit{};
  VarianceRule factor_init_rule = VarianceRule::LeCun;  // factorized models
  VarianceRule dense_init_rule = VarianceRule::Kaiming;  // unfactorized baselines
  std::uint64_t seed = 0;
  double eps_tiny = kFloat32Epsilon;

  void validate() const {
    require(depth >= 2, ErrorKind::Config, "TrainConfig: depth must be >= 2");
    require(lambda >= 0.0 && std::isfinite(lambda), ErrorKind::Config,
            "TrainConfig: lambda must be finite and >= 0");
    require(epochs >= 1, ErrorKind::Config, "TrainConfig: epochs must be >= 1");
    require(batch_size >= 1, ErrorKind::Config, "TrainConfig: batch_size must be >= 1");
    require(momentum >= 0.0 && momentum < 1.0, ErrorKind::Config,
            "TrainConfig: momentum must be in [0, 1)");
    require(eps_tiny > 0.0, ErrorKind::Config, "TrainConfig: eps_tiny must be positive");
    dwf::validate(schedule);
  }
};

struct EpochTrace {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;        // rate at the first step of the epoch
  double train_loss = 0.0;  // mean minibatch data loss, penalty excluded
  double train_acc = std::numeric_limits<double>::quiet_NaN();
  double val_acc = std::numeric_limits<double>::quiet_NaN();  // thresholded collapsed model
  double cr = 1.0;
  double collapsed_l2 = 0.0;
  double misalignment = 0.0;
  std::vector<double> layer_misalignment;  // normalized by layer parameter count
  std::vector<double> layer_cr;

  friend bool operator==(const EpochTrace&, const EpochTrace&) = default;
};

/// Training stopped on a non-finite value; carries the epochs completed so far.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& message, std::size_t step, std::vector<EpochTrace> traces)
      : Error(ErrorKind::Diverged, message, step), traces_(std::move(traces)) {}
  const std::vector<EpochTrace>& traces() const noexcept { return traces_; }

 private:
  std::vector<EpochTrace> traces_;
};

/// Heavy-ball velocity for every factor of every tensor.
struct MomentumState {
  std::vector<std::vector<std::vector<double>>> velocity;  // [tensor][factor][entry]
};

namespace detail {

inline void sgd_update_factors(FactorizedParam& p, const std::vector<std::vector<double>>& grads,
                               std::vector<std::vector<double>>& vel, double lr, double lambda,
                               double momentum, std::size_t step) {
  const std::size_t depth = p.depth();
  const double decay = 2.0 * lambda / static_cast<double>(depth);
  if (vel.empty()) vel.assign(depth, std::vector<double>(p.size(), 0.0));
  bool finite = true;
  for (std::size_t d = 0; d < depth; ++d) {
    auto w = p.factor(d);
    const auto& g = grads[d];
    auto& v = vel[d];
    for (std::size_t j = 0; j < w.size(); ++j) {
      v[j] = momentum * v[j] + (g[j] + decay * w[j]);
      w[j] -= lr * v[j];
      finite = finite && std::isfinite(w[j]);
    }
  }
  if (!finite) fail(ErrorKind::Diverged, "non-finite factor after step " + std::to_string(step), step);
}

}  // namespace detail

/// One SGD step on every factor: v <- mu v + (g + (2 lambda / D) omega); omega <- omega - lr v.
/// Gradients come from the pre-step factors, so all factors move simultaneously.
inline void sgd_step(FactorizedMlp& m, const FactorGrads& grads, MomentumState& state, double lr,
                     double lambda, double momentum, std::size_t step = 0) {
  const std::size_t layers = m.weights.size();
  require(grads.weights.size() == layers && grads.biases.size() == layers, ErrorKind::Shape,
          "sgd_step: gradient layer count does not match model");
  if (state.velocity.empty()) state.velocity.resize(2 * layers);
  for (std::size_t l = 0; l < layers; ++l) {
    detail::sgd_update_factors(m.weights[l], grads.weights[l], state.velocity[2 * l], lr, lambda,
                               momentum, step);
    detail::sgd_update_factors(m.biases[l], grads.biases[l], state.velocity[2 * l + 1], lr, lambda,
                               momentum, step);
  }
}

/// Sets entries with |value| < eps_tiny to exactly zero.
inline void threshold_in_place(DenseMlp& m, double eps_tiny) {
  require(eps_tiny > 0.0, ErrorKind::Config, "threshold: eps_tiny must be positive");
  for (DenseMatrix* t : m.tensors())
    for (double& v : t->values())
      if (std::abs(v) < eps_tiny) v = 0.0;
}

inline DenseMlp collapse_and_threshold(const FactorizedMlp& m, double eps_tiny = kFloat32Epsilon) {
  DenseMlp out = collapse_model(m);
  threshold_in_place(out, eps_tiny);
  return out;
}

namespace detail {

inline void check_data(const MlpSpec& spec, const Dataset& train, const Dataset& val) {
  require(train.size() > 0, ErrorKind::Config, "train: empty training set");
  for (const Dataset* ds : {&train, &val}) {
    if (ds->size() == 0) continue;
    require(ds->inputs.cols() == spec.input_size(), ErrorKind::Config,
            "train: data has " + std::to_string(ds->inputs.cols()) + " features, spec expects " +
                std::to_string(spec.input_size()));
    require(ds->targets.cols() == spec.output_size(), ErrorKind::Config,
            "train: targets have " + std::to_string(ds->targets.cols()) +
                " columns, spec expects " + std::to_string(spec.output_size()));
  }
}

inline void fill_sparsity(EpochTrace& tr, const SparsityReport& rep) {
  tr.cr = rep.compression_ratio;
  tr.collapsed_l2 = rep.collapsed_l2;
  tr.misalignment = rep.misalignment_total.value_or(0.0);
  tr.layer_cr.clear();
  tr.layer_misalignment.clear();
  for (const auto& l : rep.layers) {
    tr.layer_cr.push_back(l.cr);
    tr.layer_misalignment.push_back(l.misalignment_normalized.value_or(0.0));
  }
}

inline double eval_accuracy(const DenseMlp& m, const Dataset& ds) {
  if (ds.size() == 0 || !ds.is_classification()) return std::numeric_limits<double>::quiet_NaN();
  return accuracy(m, ds.inputs, ds.labels);
}

}  // namespace detail

/// Called after every epoch with the fresh trace row.
using EpochCallback = std::function<void(const EpochTrace&)>;

struct TrainResult {
  FactorizedMlp model;
  std::vector<EpochTrace> traces;
};

/// Continues SGD training of an existing factorized model.
inline TrainResult train_factorized(FactorizedMlp model, const TrainConfig& cfg,
                                    const Dataset& train_set, const Dataset& val_set,
                                    const EpochCallback& on_epoch = {}) {
  cfg.validate();
  model.validate();
  require(model.depth == cfg.depth, ErrorKind::Config, "train: model depth differs from config");
  detail::check_data(model.spec, train_set, val_set);

  const SeededRng root(cfg.seed);
  BatchIterator batches(train_set.size(), cfg.batch_size, root.child({2}));
  const std::size_t spe = batches.batches_per_epoch();
  const LrSchedule schedule = resolve_schedule(cfg.schedule, cfg.epochs * spe);

  MomentumState state;
  std::vector<EpochTrace> traces;
  std::size_t step = 0;
  try {
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
      EpochTrace tr;
      tr.epoch = epoch;
      tr.lr = lr_at(schedule, step, spe);
      double loss_sum = 0.0;
      std::size_t correct = 0;
      for (const auto& idx : batches.next_epoch()) {
        const Batch b = gather(train_set, idx);
        FactorLossGrads lg = loss_and_grads(model, b.inputs, b.targets);
        loss_sum += lg.loss * static_cast<double>(idx.size());
        if (train_set.is_classification()) correct += count_correct(lg.logits, b.labels);
        sgd_step(model, lg.grads, state, lr_at(schedule, step, spe), cfg.lambda, cfg.momentum, step);
        ++step;
      }
      const double n = static_cast<double>(train_set.size());
      tr.train_loss = loss_sum / n;
      if (train_set.is_classification()) tr.train_acc = static_cast<double>(correct) / n;
      const DenseMlp sparse = collapse_and_threshold(model, cfg.eps_tiny);
      tr.val_acc = detail::eval_accuracy(sparse, val_set);
      detail::fill_sparsity(tr, sparsity_report(sparse, &model));
      traces.push_back(tr);
      if (on_epoch) on_epoch(tr);
    }
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Numeric && e.kind() != ErrorKind::Diverged) throw;
    throw TrainingDiverged(std::string("training diverged: ") + e.what(), step, std::move(traces));
  }
  return {std::move(model), std::move(traces)};
}

/// DWF training: factorized init from stream seed/1, data order from seed/2.
inline TrainResult train(const MlpSpec& spec, const TrainConfig& cfg, const Dataset& train_set,
                         const Dataset& val_set, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  spec.validate();
  const SeededRng root(cfg.seed);
  FactorizedMlp model =
      init_factorized_mlp(spec, cfg.depth, cfg.init, cfg.factor_init_rule, root.child({1}));
  return train_factorized(std::move(model), cfg, train_set, val_set, on_epoch);
}

/// Unfactorized training options. `l1` adds the subgradient l1 * sign(w) with
/// sign(0) = 0; `mask` freezes dropped entries at exactly zero.
struct DenseTrainOptions {
  double l1 = 0.0;
  const PruneMask* mask = nullptr;
};

struct DenseTrainResult {
  DenseMlp model;
  std::vector<EpochTrace> traces;
};

/// Heavy-ball SGD on a dense network with the same loop, schedule and trace
/// schema as the factorized trainer. Misalignment columns are zero.
inline DenseTrainResult train_dense(DenseMlp model, const TrainConfig& cfg,
                                    const Dataset& train_set, const Dataset& val_set,
                                    const DenseTrainOptions& opt = {},
                                    const EpochCallback& on_epoch = {}) {
  cfg.validate();
  model.spec.validate();
  require(opt.l1 >= 0.0, ErrorKind::Config, "train_dense: l1 must be >= 0");
  detail::check_data(model.spec, train_set, val_set);
  if (opt.mask) apply_mask(*opt.mask, model.tensors());

  const SeededRng root(cfg.seed);
  BatchIterator batches(train_set.size(), cfg.batch_size, root.child({2}));
  const std::size_t spe = batches.batches_per_epoch();
  const LrSchedule schedule = resolve_schedule(cfg.schedule, cfg.epochs * spe);

  std::vector<std::vector<double>> velocity;
  for (const DenseMatrix* t : model.tensors()) velocity.emplace_back(t->size(), 0.0);
  std::vector<EpochTrace> traces;
  std::size_t step = 0;
  try {
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
      EpochTrace tr;
      tr.epoch = epoch;
      tr.lr = lr_at(schedule, step, spe);
      double loss_sum = 0.0;
      std::size_t correct = 0;
      for (const auto& idx : batches.next_epoch()) {
        const Batch b = gather(train_set, idx);
        DenseLossGrads lg = loss_and_grads(model, b.inputs, b.targets);
        loss_sum += lg.loss * static_cast<double>(idx.size());
        if (train_set.is_classification()) correct += count_correct(lg.logits, b.labels);
        const double lr = lr_at(schedule, step, spe);
        auto params = model.tensors();
        bool finite = true;
        for (std::size_t t = 0; t < params.size(); ++t) {
          auto w = params[t]->values();
          const auto g = (t % 2 == 0 ? lg.grads.weights[t / 2] : lg.grads.biases[t / 2]).values();
          auto& v = velocity[t];
          const std::uint8_t* keep = opt.mask ? opt.mask->tensors[t].keep.data() : nullptr;
          for (std::size_t j = 0; j < w.size(); ++j) {
            if (keep && !keep[j]) continue;
            double gj = g[j];
            if (opt.l1 > 0.0 && w[j] != 0.0) gj += w[j] > 0.0 ? opt.l1 : -opt.l1;
            v[j] = cfg.momentum * v[j] + gj;
            w[j] -= lr * v[j];
            finite = finite && std::isfinite(w[j]);
          }
        }
        if (!finite) fail(ErrorKind::Diverged, "non-finite weight after step " + std::to_string(step), step);
        ++step;
      }
      const double n = static_cast<double>(train_set.size());
      tr.train_loss = loss_sum / n;
      if (train_set.is_classification()) tr.train_acc = static_cast<double>(correct) / n;
      DenseMlp sparse = model;
      threshold_in_place(sparse, cfg.eps_tiny);
      tr.val_acc = detail::eval_accuracy(sparse, val_set);
      detail::fill_sparsity(tr, sparsity_report(sparse));
      traces.push_back(tr);
      if (on_epoch) on_epoch(tr);
    }
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Numeric && e.kind() != ErrorKind::Diverged) throw;
    throw TrainingDiverged(std::string("training diverged: ") + e.what(), step, std::move(traces));
  }
  return {std::move(model), std::move(traces)};
}

/// Unfactorized SGD with an L1 subgradient of strength cfg.lambda. Init uses
/// cfg.dense_init_rule with zero biases (stream seed/1).
inline DenseTrainResult train_vanilla_l1(const MlpSpec& spec, const TrainConfig& cfg,
                                         const Dataset& train_set, const Dataset& val_set,
                                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  spec.validate();
  const SeededRng root(cfg.seed);
  DenseMlp init = init_dense_mlp(spec, cfg.dense_init_rule, root.child({1}));
  return train_dense(std::move(init), cfg, train_set, val_set, DenseTrainOptions{cfg.lambda, nullptr},
                     on_epoch);
}

}  // namespace dwf
