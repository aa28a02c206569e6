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

#ifndef HSFM_METAOPT_HPP_
#define HSFM_METAOPT_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hsfm/featurestore.hpp"
#include "hsfm/hardset.hpp"
#include "hsfm/linhead.hpp"

namespace hsfm {

// Learnable support embeddings H (s x d) with fixed labels. Rows start as
// frozen training features; only `embeddings` ever changes.
struct SupportSet {
  Eigen::MatrixXd embeddings;
  std::vector<std::uint32_t> labels;
  std::vector<std::size_t> source_rows;
  std::vector<std::uint32_t> source_groups;
  Eigen::MatrixXd initial_embeddings;
  std::uint32_t class_count = 0;
  std::uint32_t group_count = 0;

  std::size_t size() const { return labels.size(); }
};

// Class-balanced sample of `per_class` training rows per class, without
// replacement unless a class is smaller than `per_class`.
SupportSet init_support(const FeatureDataset& train, std::size_t per_class,
                        std::uint64_t seed);

// Recorded inner adaptation. iterates[t] is the head before step t, so
// iterates.front() is the starting head and iterates.back() the adapted one.
struct InnerTape {
  std::vector<LinearHead> iterates;
  double alpha = 0.0;
  std::optional<double> clip_norm;
  // Clip factor applied at each step (1 when the gradient was not clipped).
  std::vector<double> clip_scales;
  // Support state the tape was recorded against.
  Eigen::MatrixXd support_embeddings;
  std::vector<std::uint32_t> support_labels;

  std::size_t steps() const { return iterates.empty() ? 0 : iterates.size() - 1; }
};

struct InnerResult {
  LinearHead adapted;
  InnerTape tape;
};

// T full-batch gradient steps of the inner loss on (H, labels) at rate
// alpha, starting from `head`.
InnerResult inner_adapt(const LinearHead& head, const SupportSet& support,
                        std::size_t steps, double alpha,
                        std::optional<double> clip_norm = std::nullopt);

// Re-runs the update recurrence from tape.iterates[0] and reports whether
// every stored iterate is reproduced exactly.
bool tape_is_consistent(const InnerTape& tape);

struct MetaGradientOptions {
  // Drop both second-derivative products. For this model the result is the
  // zero matrix; kept to demonstrate that.
  bool first_order = false;
  // Mutation hook for the gradient self-check: flips the sign of the
  // Hessian-vector product. Never set outside check-grad.
  bool flip_hessian_sign = false;
};

// Exact gradient of the hard-set loss of the unrolled head with respect to
// the support embeddings, by reverse accumulation through the tape.
Eigen::MatrixXd meta_gradient(const InnerTape& tape, const SupportSet& support,
                              const HardSet& hard,
                              const MetaGradientOptions& options = {});

// Hard-set loss of the head obtained by unrolling `steps` inner steps on
// the given embeddings.
double unrolled_outer_loss(const LinearHead& head,
                           const Eigen::MatrixXd& embeddings,
                           std::span<const std::uint32_t> labels,
                           const HardSet& hard, std::size_t steps, double alpha,
                           std::optional<double> clip_norm = std::nullopt);

// Central differences of unrolled_outer_loss, one H entry at a time.
Eigen::MatrixXd finite_diff_meta_gradient(
    const LinearHead& head, const SupportSet& support, const HardSet& hard,
    std::size_t steps, double alpha, double eps,
    std::optional<double> clip_norm = std::nullopt);

enum class OuterOptimizerKind { plain_gd, adaptive };

std::string to_string(OuterOptimizerKind kind);
OuterOptimizerKind outer_optimizer_from_string(const std::string& name);

// Update rule for H. Plain descent, or Adam-style moments when adaptive.
class OuterOptimizer {
 public:
  OuterOptimizer(OuterOptimizerKind kind, double lr);

  // Applies one update in place and returns the step taken (new - old).
  Eigen::MatrixXd step(Eigen::MatrixXd& params, const Eigen::MatrixXd& grad);

 private:
  OuterOptimizerKind kind_;
  double lr_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double epsilon_ = 1e-8;
  std::size_t t_ = 0;
  Eigen::MatrixXd m_;
  Eigen::MatrixXd v_;
};

struct HsfmConfig {
  std::size_t support_per_class = 16;
  std::size_t inner_steps = 10;  // T
  double inner_lr = 1e-2;        // alpha, also the ERM-phase rate
  double outer_lr = 20.0;        // eta
  std::size_t meta_steps = 10;   // K_H
  std::size_t k_hard = 32;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
  std::optional<double> clip_norm;
  OuterOptimizerKind outer_optimizer = OuterOptimizerKind::plain_gd;
  bool first_order = false;

  void validate() const;

  friend bool operator==(const HsfmConfig&, const HsfmConfig&) = default;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t hard_set_size = 0;
  // Persistent head on this epoch's hard set, before and after the epoch.
  double hard_loss_before = 0.0;
  double hard_loss_after = 0.0;
  // Meta objective (adapted head on the hard set) at the first and after the
  // last meta step.
  double outer_loss_first = 0.0;
  double outer_loss_last = 0.0;
  double val_worst_group_accuracy = 0.0;
  double val_average_accuracy = 0.0;
  double mean_delta_h = 0.0;
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
};

struct HsfmResult {
  LinearHead head;
  SupportSet support;
  TrainTrace trace;
  HardSet last_hard_set;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Alternating procedure: refresh the hard set under the persistent head,
// take K_H meta steps on H (each from a fresh inner unroll of the persistent
// head), then T plain ERM steps of the persistent head on (H, labels).
HsfmResult hsfm_train(const LinearHead& head0, const DatasetSplit& split,
                      const HsfmConfig& cfg,
                      const EpochCallback& on_epoch = nullptr);

enum class DfrBalance { by_group, by_class };

std::string to_string(DfrBalance balance);
DfrBalance dfr_balance_from_string(const std::string& name);

// Rows of `val` subsampled to equal counts per group (or class), returned in
// ascending row order.
std::vector<std::size_t> balanced_rows(const FeatureDataset& val,
                                       DfrBalance balance, std::uint64_t seed);

// Last-layer retraining of head0 on a balanced subset of the validation set.
LinearHead dfr_baseline(const LinearHead& head0, const FeatureDataset& val,
                        const ErmOptions& options, DfrBalance balance,
                        std::uint64_t seed = 0);

// Writes `<base>.init` (initial embeddings) and `<base>.opt` (current H) as
// HSFM-FS files; labels and provenance groups ride along.
void export_support(const SupportSet& support, const std::filesystem::path& base);

struct SupportExport {
  FeatureDataset initial;
  FeatureDataset optimized;
};

SupportExport read_support_export(const std::filesystem::path& base);

std::filesystem::path with_suffix(const std::filesystem::path& base,
                                  const std::string& suffix);

}  // namespace hsfm

#endif  // HSFM_METAOPT_HPP_
