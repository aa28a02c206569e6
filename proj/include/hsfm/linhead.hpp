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

#ifndef HSFM_LINHEAD_HPP_
#define HSFM_LINHEAD_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hsfm/featurestore.hpp"

namespace hsfm {

// Linear softmax head: logits = W h + b, W is C x d.
struct LinearHead {
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;

  static LinearHead zeros(std::uint32_t class_count, std::uint32_t dim);

  std::uint32_t class_count() const { return static_cast<std::uint32_t>(weights.rows()); }
  std::uint32_t dim() const { return static_cast<std::uint32_t>(weights.cols()); }
  bool is_finite() const;

  friend bool operator==(const LinearHead& a, const LinearHead& b) {
    return a.weights == b.weights && a.bias == b.bias;
  }
};

struct EvalReport {
  // Empty optional for groups with no rows.
  std::vector<std::optional<double>> per_group_accuracy;
  std::vector<std::size_t> per_group_counts;
  std::vector<std::size_t> per_group_correct;
  double worst_group_accuracy = 0.0;
  double average_accuracy = 0.0;
  double mean_loss = 0.0;
};

Eigen::VectorXd logits(const LinearHead& head, const Eigen::Ref<const Eigen::VectorXd>& h);

// -log softmax(z)_y with the max-shift.
double cross_entropy(const Eigen::Ref<const Eigen::VectorXd>& z, std::uint32_t y);

// softmax(z) - onehot(y).
Eigen::VectorXd loss_grad_logits(const Eigen::Ref<const Eigen::VectorXd>& z, std::uint32_t y);

// Row-wise softmax of an n x C logit matrix.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& z);

// Row-wise logits Z = X W^T + 1 b^T for an n x d feature matrix.
Eigen::MatrixXd batch_logits(const LinearHead& head, const Eigen::MatrixXd& features);

struct BatchLossGrads {
  double mean_loss = 0.0;
  Eigen::MatrixXd grad_weights;  // C x d
  Eigen::VectorXd grad_bias;     // C
  Eigen::VectorXd per_example_losses;
};

// Mean cross-entropy of the head over the batch and its gradient with respect
// to (W, b). Reductions are single-threaded with a fixed order, so results are
// bit-reproducible for a given build.
BatchLossGrads batch_loss_and_grads(const LinearHead& head,
                                    const Eigen::MatrixXd& features,
                                    std::span<const std::uint32_t> labels);

// Per-row cross-entropy without gradients.
Eigen::VectorXd per_example_losses(const LinearHead& head,
                                   const Eigen::MatrixXd& features,
                                   std::span<const std::uint32_t> labels);

// Factor in (0, 1] that rescales (dW, db) to global L2 norm <= clip_norm.
double clip_scale(const Eigen::MatrixXd& grad_weights,
                  const Eigen::VectorXd& grad_bias,
                  std::optional<double> clip_norm);

struct ErmOptions {
  std::size_t steps = 500;
  double lr = 0.1;
  std::optional<double> clip_norm;
  // L2 penalty on W only.
  double weight_decay = 0.0;
};

// Full-batch gradient descent from `head`.
LinearHead erm_train(LinearHead head, const Eigen::MatrixXd& features,
                     std::span<const std::uint32_t> labels,
                     const ErmOptions& options);
LinearHead erm_train(LinearHead head, const FeatureDataset& ds,
                     const ErmOptions& options);

std::vector<std::uint32_t> predict(const LinearHead& head,
                                   const Eigen::MatrixXd& features);

EvalReport evaluate(const LinearHead& head, const FeatureDataset& ds);

// HSFH checkpoint: "HSFH", u32 version, u32 C, u32 d, W row-major f32, b f32.
inline constexpr char kHeadMagic[4] = {'H', 'S', 'F', 'H'};
inline constexpr std::uint32_t kHeadFormatVersion = 1;

std::vector<std::uint8_t> encode_head(const LinearHead& head);
LinearHead decode_head(std::span<const std::uint8_t> bytes,
                       const std::string& source = "<memory>");
void save_head(const std::filesystem::path& path, const LinearHead& head);
LinearHead load_head(const std::filesystem::path& path);

}  // namespace hsfm

#endif  // HSFM_LINHEAD_HPP_
