// Copyright 2026 The HSFM Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>

#include <spdlog/spdlog.h>

#include "hsfm/errors.hpp"
#include "hsfm/metaopt.hpp"

namespace hsfm {

std::string to_string(OuterOptimizerKind kind) {
  return kind == OuterOptimizerKind::plain_gd ? "plain-gd" : "adaptive";
}

OuterOptimizerKind outer_optimizer_from_string(const std::string& name) {
  if (name == "plain-gd") return OuterOptimizerKind::plain_gd;
  if (name == "adaptive") return OuterOptimizerKind::adaptive;
  throw ValidationError("unknown outer optimizer '" + name +
                        "' (expected plain-gd or adaptive)");
}

OuterOptimizer::OuterOptimizer(OuterOptimizerKind kind, double lr)
    : kind_(kind), lr_(lr) {}

Eigen::MatrixXd OuterOptimizer::step(Eigen::MatrixXd& params,
                                     const Eigen::MatrixXd& grad) {
  Eigen::MatrixXd delta;
  if (kind_ == OuterOptimizerKind::plain_gd) {
    delta = -lr_ * grad;
  } else {
    if (t_ == 0) {
      m_ = Eigen::MatrixXd::Zero(grad.rows(), grad.cols());
      v_ = Eigen::MatrixXd::Zero(grad.rows(), grad.cols());
    }
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    delta = -lr_ * ((m_ / c1).array() /
                    ((v_ / c2).array().sqrt() + epsilon_)).matrix();
  }
  params += delta;
  return delta;
}

void HsfmConfig::validate() const {
  if (support_per_class < 1) throw ValidationError("support_per_class must be >= 1");
  if (inner_steps < 1) throw ValidationError("T (inner_steps) must be >= 1");
  if (k_hard < 1) throw ValidationError("k_hard must be >= 1");
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (!(inner_lr > 0.0) || !std::isfinite(inner_lr)) {
    throw ValidationError("inner_lr must be finite and > 0");
  }
  if (!(outer_lr > 0.0) || !std::isfinite(outer_lr)) {
    throw ValidationError("outer_lr must be finite and > 0");
  }
  if (clip_norm && !(*clip_norm > 0.0)) {
    throw ValidationError("clip_norm must be > 0 when set");
  }
}

namespace {

// Re-throws a divergence with the epoch and phase attached.
template <typename Fn>
auto in_phase(std::size_t epoch, const char* phase, Fn&& fn) {
  try {
    return fn();
  } catch (const DivergenceError& e) {
    throw DivergenceError("epoch " + std::to_string(epoch) + " " + phase +
                              " (" + e.what() + ")",
                          e.step());
  }
}

}  // namespace

HsfmResult hsfm_train(const LinearHead& head0, const DatasetSplit& split,
                      const HsfmConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  split.validate();
  if (head0.class_count() != split.train.class_count() ||
      head0.dim() != split.train.dim()) {
    throw ShapeError("initial head shape does not match the dataset");
  }

  HsfmResult result;
  result.head = head0;
  result.support = init_support(split.train, cfg.support_per_class, cfg.seed);
  SupportSet& support = result.support;
  OuterOptimizer outer(cfg.outer_optimizer, cfg.outer_lr);
  MetaGradientOptions grad_options;
  grad_options.first_order = cfg.first_order;
  const ErmOptions erm_phase{cfg.inner_steps, cfg.inner_lr, cfg.clip_norm, 0.0};

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochRecord record;
    record.epoch = epoch;

    HardSet hard = build_hard_set(result.head, split.val, cfg.k_hard);
    if (hard.empty()) {
      throw EmptyInputError("epoch " + std::to_string(epoch) + ": hard set is empty");
    }
    record.hard_set_size = hard.size();
    record.hard_loss_before = hard_set_loss(result.head, hard);

    double delta_sum = 0.0;
    for (std::size_t k = 0; k < cfg.meta_steps; ++k) {
      const InnerResult inner = in_phase(epoch, "meta", [&] {
        return inner_adapt(result.head, support, cfg.inner_steps, cfg.inner_lr,
                           cfg.clip_norm);
      });
      if (k == 0) record.outer_loss_first = hard_set_loss(inner.adapted, hard);
      const Eigen::MatrixXd grad =
          meta_gradient(inner.tape, support, hard, grad_options);
      const Eigen::MatrixXd delta = outer.step(support.embeddings, grad);
      if (!support.embeddings.allFinite()) {
        throw DivergenceError("epoch " + std::to_string(epoch) + " meta update", k);
      }
      delta_sum += delta.norm();
    }
    if (cfg.meta_steps > 0) {
      record.mean_delta_h = delta_sum / static_cast<double>(cfg.meta_steps);
      record.outer_loss_last = in_phase(epoch, "meta", [&] {
        return unrolled_outer_loss(result.head, support.embeddings,
                                   support.labels, hard, cfg.inner_steps,
                                   cfg.inner_lr, cfg.clip_norm);
      });
    } else {
      record.outer_loss_first = record.outer_loss_last = in_phase(epoch, "meta", [&] {
        return unrolled_outer_loss(result.head, support.embeddings,
                                   support.labels, hard, cfg.inner_steps,
                                   cfg.inner_lr, cfg.clip_norm);
      });
    }

    result.head = in_phase(epoch, "erm", [&] {
      return erm_train(result.head, support.embeddings, support.labels, erm_phase);
    });
    record.hard_loss_after = hard_set_loss(result.head, hard);

    const EvalReport val = evaluate(result.head, split.val);
    record.val_worst_group_accuracy = val.worst_group_accuracy;
    record.val_average_accuracy = val.average_accuracy;
    spdlog::debug("epoch {}: hard loss {:.4f} -> {:.4f}, outer {:.4f} -> {:.4f}, "
                  "val wga {:.4f}",
                  epoch, record.hard_loss_before, record.hard_loss_after,
                  record.outer_loss_first, record.outer_loss_last,
                  record.val_worst_group_accuracy);
    result.trace.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
    result.last_hard_set = std::move(hard);
  }
  return result;
}

}  // namespace hsfm
