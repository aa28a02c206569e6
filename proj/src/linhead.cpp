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

#include "hsfm/linhead.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "hsfm/errors.hpp"

namespace hsfm {

namespace {

void check_label(std::uint32_t y, Eigen::Index classes) {
  if (static_cast<Eigen::Index>(y) >= classes) {
    throw ValidationError("label " + std::to_string(y) +
                          " out of range for " + std::to_string(classes) +
                          " classes");
  }
}

void check_batch(const LinearHead& head, const Eigen::MatrixXd& features,
                 std::span<const std::uint32_t> labels) {
  if (features.cols() != head.weights.cols()) {
    throw ShapeError("feature dim " + std::to_string(features.cols()) +
                     " does not match head dim " +
                     std::to_string(head.weights.cols()));
  }
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw ShapeError("feature rows and labels differ in length");
  }
  if (head.bias.size() != head.weights.rows()) {
    throw ShapeError("head bias length does not match class count");
  }
  for (std::uint32_t y : labels) check_label(y, head.weights.rows());
}

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& z) {
  const double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

}  // namespace

LinearHead LinearHead::zeros(std::uint32_t class_count, std::uint32_t dim) {
  return {Eigen::MatrixXd::Zero(class_count, dim),
          Eigen::VectorXd::Zero(class_count)};
}

bool LinearHead::is_finite() const {
  return weights.allFinite() && bias.allFinite();
}

Eigen::VectorXd logits(const LinearHead& head,
                       const Eigen::Ref<const Eigen::VectorXd>& h) {
  if (h.size() != head.weights.cols()) {
    throw ShapeError("input dim " + std::to_string(h.size()) +
                     " does not match head dim " +
                     std::to_string(head.weights.cols()));
  }
  return head.weights * h + head.bias;
}

double cross_entropy(const Eigen::Ref<const Eigen::VectorXd>& z,
                     std::uint32_t y) {
  check_label(y, z.size());
  // Clamp guards the -0.0 / tiny negative rounding case.
  return std::max(0.0, log_sum_exp(z) - z(y));
}

Eigen::VectorXd loss_grad_logits(const Eigen::Ref<const Eigen::VectorXd>& z,
                                 std::uint32_t y) {
  check_label(y, z.size());
  Eigen::VectorXd p = (z.array() - z.maxCoeff()).exp();
  p /= p.sum();
  p(y) -= 1.0;
  return p;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& z) {
  Eigen::MatrixXd p = z.colwise() - z.rowwise().maxCoeff();
  p = p.array().exp();
  p.array().colwise() /= p.rowwise().sum().array();
  return p;
}

Eigen::MatrixXd batch_logits(const LinearHead& head,
                             const Eigen::MatrixXd& features) {
  Eigen::MatrixXd z = features * head.weights.transpose();
  z.rowwise() += head.bias.transpose();
  return z;
}

Eigen::VectorXd per_example_losses(const LinearHead& head,
                                   const Eigen::MatrixXd& features,
                                   std::span<const std::uint32_t> labels) {
  check_batch(head, features, labels);
  const Eigen::MatrixXd z = batch_logits(head, features);
  Eigen::VectorXd losses(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    losses(i) = std::max(0.0, log_sum_exp(z.row(i).transpose()) -
                                  z(i, labels[static_cast<std::size_t>(i)]));
  }
  return losses;
}

BatchLossGrads batch_loss_and_grads(const LinearHead& head,
                                    const Eigen::MatrixXd& features,
                                    std::span<const std::uint32_t> labels) {
  if (labels.empty()) throw EmptyInputError("empty batch");
  check_batch(head, features, labels);
  const auto n = static_cast<double>(labels.size());

  BatchLossGrads out;
  out.per_example_losses = per_example_losses(head, features, labels);
  out.mean_loss = out.per_example_losses.sum() / n;

  Eigen::MatrixXd residual = softmax_rows(batch_logits(head, features));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    residual(static_cast<Eigen::Index>(i), labels[i]) -= 1.0;
  }
  out.grad_weights = residual.transpose() * features / n;
  out.grad_bias = residual.colwise().sum().transpose() / n;
  return out;
}

double clip_scale(const Eigen::MatrixXd& grad_weights,
                  const Eigen::VectorXd& grad_bias,
                  std::optional<double> clip_norm) {
  if (!clip_norm) return 1.0;
  const double norm = std::sqrt(grad_weights.squaredNorm() + grad_bias.squaredNorm());
  if (norm <= *clip_norm) return 1.0;
  return *clip_norm / norm;
}

LinearHead erm_train(LinearHead head, const Eigen::MatrixXd& features,
                     std::span<const std::uint32_t> labels,
                     const ErmOptions& options) {
  if (!(options.lr >= 0.0)) throw ValidationError("ERM lr must be >= 0");
  if (options.clip_norm && !(*options.clip_norm > 0.0)) {
    throw ValidationError("clip_norm must be > 0");
  }
  for (std::size_t step = 0; step < options.steps; ++step) {
    BatchLossGrads g = batch_loss_and_grads(head, features, labels);
    if (!std::isfinite(g.mean_loss)) throw DivergenceError("erm_train", step);
    if (options.weight_decay != 0.0) {
      g.grad_weights += options.weight_decay * head.weights;
    }
    const double scale = clip_scale(g.grad_weights, g.grad_bias, options.clip_norm);
    head.weights -= (options.lr * scale) * g.grad_weights;
    head.bias -= (options.lr * scale) * g.grad_bias;
    if (!head.is_finite()) throw DivergenceError("erm_train", step);
  }
  return head;
}

LinearHead erm_train(LinearHead head, const FeatureDataset& ds,
                     const ErmOptions& options) {
  return erm_train(std::move(head), ds.features_double(), ds.labels(), options);
}

std::vector<std::uint32_t> predict(const LinearHead& head,
                                   const Eigen::MatrixXd& features) {
  if (features.cols() != head.weights.cols()) {
    throw ShapeError("feature dim does not match head dim");
  }
  const Eigen::MatrixXd z = batch_logits(head, features);
  std::vector<std::uint32_t> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < z.cols(); ++c) {
      if (z(i, c) > z(i, best)) best = c;
    }
    out[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(best);
  }
  return out;
}

EvalReport evaluate(const LinearHead& head, const FeatureDataset& ds) {
  if (ds.is_empty()) throw EmptyInputError("cannot evaluate on an empty dataset");
  if (head.class_count() != ds.class_count()) {
    throw ShapeError("head has " + std::to_string(head.class_count()) +
                     " classes but dataset has " +
                     std::to_string(ds.class_count()));
  }
  const Eigen::MatrixXd x = ds.features_double();
  const auto predictions = predict(head, x);
  const auto labels = ds.labels();
  const auto groups = ds.groups();

  EvalReport report;
  report.per_group_counts.assign(ds.group_count(), 0);
  report.per_group_correct.assign(ds.group_count(), 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    ++report.per_group_counts[groups[i]];
    if (predictions[i] == labels[i]) {
      ++report.per_group_correct[groups[i]];
      ++correct;
    }
  }
  report.per_group_accuracy.resize(ds.group_count());
  report.worst_group_accuracy = 1.0;
  for (std::size_t g = 0; g < ds.group_count(); ++g) {
    if (report.per_group_counts[g] == 0) continue;
    const double acc = static_cast<double>(report.per_group_correct[g]) /
                       static_cast<double>(report.per_group_counts[g]);
    report.per_group_accuracy[g] = acc;
    report.worst_group_accuracy = std::min(report.worst_group_accuracy, acc);
  }
  report.average_accuracy =
      static_cast<double>(correct) / static_cast<double>(ds.size());
  report.mean_loss = per_example_losses(head, x, labels).mean();
  return report;
}

std::vector<std::uint8_t> encode_head(const LinearHead& head) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), std::begin(kHeadMagic), std::end(kHeadMagic));
  io::put_u32(out, kHeadFormatVersion);
  io::put_u32(out, head.class_count());
  io::put_u32(out, head.dim());
  for (Eigen::Index r = 0; r < head.weights.rows(); ++r) {
    for (Eigen::Index c = 0; c < head.weights.cols(); ++c) {
      io::put_f32(out, static_cast<float>(head.weights(r, c)));
    }
  }
  for (Eigen::Index r = 0; r < head.bias.size(); ++r) {
    io::put_f32(out, static_cast<float>(head.bias(r)));
  }
  return out;
}

LinearHead decode_head(std::span<const std::uint8_t> bytes,
                       const std::string& source) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kHeadMagic, 4) != 0) {
    throw MagicError(source + ": not an HSFH head checkpoint");
  }
  constexpr std::size_t kHeader = 16;
  if (bytes.size() < kHeader) throw TruncationError(source, kHeader, bytes.size());
  const std::uint32_t version = io::get_u32(bytes, 4);
  if (version != kHeadFormatVersion) {
    throw VersionError(source, version, kHeadFormatVersion);
  }
  const std::uint64_t classes = io::get_u32(bytes, 8);
  const std::uint64_t dim = io::get_u32(bytes, 12);
  if (classes < 2 || dim < 1) {
    throw FormatError(source + ": head checkpoint declares an invalid shape");
  }
  const std::uint64_t expected = kHeader + 4 * (classes * dim + classes);
  if (bytes.size() < expected) {
    throw TruncationError(source, static_cast<std::size_t>(expected), bytes.size());
  }
  if (bytes.size() > expected) {
    throw FormatError(source + ": trailing bytes after head payload");
  }
  LinearHead head = LinearHead::zeros(static_cast<std::uint32_t>(classes),
                                      static_cast<std::uint32_t>(dim));
  std::size_t offset = kHeader;
  for (Eigen::Index r = 0; r < head.weights.rows(); ++r) {
    for (Eigen::Index c = 0; c < head.weights.cols(); ++c, offset += 4) {
      head.weights(r, c) = io::get_f32(bytes, offset);
    }
  }
  for (Eigen::Index r = 0; r < head.bias.size(); ++r, offset += 4) {
    head.bias(r) = io::get_f32(bytes, offset);
  }
  if (!head.is_finite()) throw ValidationError(source + ": non-finite head entry");
  return head;
}

void save_head(const std::filesystem::path& path, const LinearHead& head) {
  if (!head.is_finite()) throw ValidationError("refusing to save a non-finite head");
  io::write_file(path, encode_head(head));
}

LinearHead load_head(const std::filesystem::path& path) {
  return decode_head(io::read_file(path), path.string());
}

}  // namespace hsfm
