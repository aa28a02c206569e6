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

// Inner-loop unrolling and its reverse-mode derivative.
//
// Per example i with logits z_i = W h_i + b, p_i = softmax(z_i) and
// r_i = p_i - e_{y_i}, the inner gradient is
//   g_W = (1/s) sum_i r_i h_i^T,   g_b = (1/s) sum_i r_i.
// For an adjoint direction (V, v) let dz_i = V h_i + v and
// J_i = diag(p_i) - p_i p_i^T. Then
//   Hessian product:  ((1/s) sum_i J_i dz_i h_i^T, (1/s) sum_i J_i dz_i)
//   mixed product:    row i = (1/s) (V^T r_i + W^T J_i dz_i)
// Both are evaluated at the stored iterate of each step.

#include <cmath>

#include "hsfm/errors.hpp"
#include "hsfm/metaopt.hpp"

namespace hsfm {

namespace {

struct StepOutcome {
  LinearHead next;
  double scale = 1.0;
};

StepOutcome inner_step(const LinearHead& head, const Eigen::MatrixXd& embeddings,
                       std::span<const std::uint32_t> labels, double alpha,
                       std::optional<double> clip_norm, std::size_t step) {
  const BatchLossGrads g = batch_loss_and_grads(head, embeddings, labels);
  if (!std::isfinite(g.mean_loss)) throw DivergenceError("inner_adapt", step);
  StepOutcome out;
  out.scale = clip_scale(g.grad_weights, g.grad_bias, clip_norm);
  out.next.weights = head.weights - (alpha * out.scale) * g.grad_weights;
  out.next.bias = head.bias - (alpha * out.scale) * g.grad_bias;
  if (!out.next.is_finite()) throw DivergenceError("inner_adapt", step);
  return out;
}

void check_alpha(double alpha) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw ValidationError("inner learning rate must be finite and >= 0");
  }
}

}  // namespace

InnerResult inner_adapt(const LinearHead& head, const SupportSet& support,
                        std::size_t steps, double alpha,
                        std::optional<double> clip_norm) {
  check_alpha(alpha);
  if (support.size() == 0) throw EmptyInputError("support set is empty");
  InnerResult result;
  InnerTape& tape = result.tape;
  tape.alpha = alpha;
  tape.clip_norm = clip_norm;
  tape.support_embeddings = support.embeddings;
  tape.support_labels = support.labels;
  tape.iterates.reserve(steps + 1);
  tape.iterates.push_back(head);
  for (std::size_t t = 0; t < steps; ++t) {
    StepOutcome s = inner_step(tape.iterates.back(), support.embeddings,
                               support.labels, alpha, clip_norm, t);
    tape.clip_scales.push_back(s.scale);
    tape.iterates.push_back(std::move(s.next));
  }
  result.adapted = tape.iterates.back();
  return result;
}

bool tape_is_consistent(const InnerTape& tape) {
  if (tape.iterates.empty()) return false;
  for (std::size_t t = 0; t + 1 < tape.iterates.size(); ++t) {
    const StepOutcome s =
        inner_step(tape.iterates[t], tape.support_embeddings,
                   tape.support_labels, tape.alpha, tape.clip_norm, t);
    if (!(s.next == tape.iterates[t + 1])) return false;
  }
  return true;
}

Eigen::MatrixXd meta_gradient(const InnerTape& tape, const SupportSet& support,
                              const HardSet& hard,
                              const MetaGradientOptions& options) {
  if (tape.iterates.empty()) throw ValidationError("tape has no iterates");
  if (support.embeddings.rows() != tape.support_embeddings.rows() ||
      support.embeddings.cols() != tape.support_embeddings.cols()) {
    throw ShapeError("support set shape does not match the tape");
  }
  if (support.embeddings != tape.support_embeddings ||
      support.labels != tape.support_labels) {
    throw ValidationError("tape was recorded against a different support state");
  }
  if (hard.empty()) throw EmptyInputError("hard set is empty");
  if (hard.features.cols() != support.embeddings.cols()) {
    throw ShapeError("hard set dim does not match support dim");
  }

  const Eigen::MatrixXd& h = tape.support_embeddings;
  const auto s = static_cast<double>(h.rows());
  const double alpha = tape.alpha;
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(h.rows(), h.cols());
  if (tape.steps() == 0 || options.first_order) return grad;

  const BatchLossGrads outer =
      batch_loss_and_grads(tape.iterates.back(), hard.features, hard.labels);
  Eigen::MatrixXd adj_w = outer.grad_weights;
  Eigen::VectorXd adj_b = outer.grad_bias;
  const double hessian_sign = options.flip_hessian_sign ? -1.0 : 1.0;

  for (std::size_t t = tape.steps(); t-- > 0;) {
    const LinearHead& theta = tape.iterates[t];
    const Eigen::MatrixXd p = softmax_rows(batch_logits(theta, h));
    Eigen::MatrixXd r = p;
    for (std::size_t i = 0; i < tape.support_labels.size(); ++i) {
      r(static_cast<Eigen::Index>(i), tape.support_labels[i]) -= 1.0;
    }

    // Pull the adjoint back through gradient clipping when it was active:
    // d(c g/|g|)/dg = (c/|g|)(I - u u^T), u = g/|g|.
    Eigen::MatrixXd mu_w = adj_w;
    Eigen::VectorXd mu_b = adj_b;
    const double scale = tape.clip_scales[t];
    if (scale < 1.0) {
      const Eigen::MatrixXd g_w = r.transpose() * h / s;
      const Eigen::VectorXd g_b = r.colwise().sum().transpose() / s;
      const double norm = std::sqrt(g_w.squaredNorm() + g_b.squaredNorm());
      const double along =
          ((g_w.array() * adj_w.array()).sum() + g_b.dot(adj_b)) / (norm * norm);
      mu_w = scale * (adj_w - along * g_w);
      mu_b = scale * (adj_b - along * g_b);
    }

    Eigen::MatrixXd dz = h * mu_w.transpose();
    dz.rowwise() += mu_b.transpose();
    const Eigen::MatrixXd pdz = p.cwiseProduct(dz);
    const Eigen::VectorXd inner = pdz.rowwise().sum();
    const Eigen::MatrixXd jdz = pdz - p.cwiseProduct(inner.replicate(1, p.cols()));

    grad -= (alpha / s) * (r * mu_w + jdz * theta.weights);
    adj_w -= (hessian_sign * alpha / s) * (jdz.transpose() * h);
    adj_b -= (hessian_sign * alpha / s) * jdz.colwise().sum().transpose();
  }
  return grad;
}

double unrolled_outer_loss(const LinearHead& head,
                           const Eigen::MatrixXd& embeddings,
                           std::span<const std::uint32_t> labels,
                           const HardSet& hard, std::size_t steps, double alpha,
                           std::optional<double> clip_norm) {
  check_alpha(alpha);
  LinearHead current = head;
  for (std::size_t t = 0; t < steps; ++t) {
    current = inner_step(current, embeddings, labels, alpha, clip_norm, t).next;
  }
  return hard_set_loss(current, hard);
}

Eigen::MatrixXd finite_diff_meta_gradient(const LinearHead& head,
                                          const SupportSet& support,
                                          const HardSet& hard, std::size_t steps,
                                          double alpha, double eps,
                                          std::optional<double> clip_norm) {
  if (!(eps > 0.0)) throw ValidationError("finite-difference eps must be > 0");
  Eigen::MatrixXd grad(support.embeddings.rows(), support.embeddings.cols());
  Eigen::MatrixXd probe = support.embeddings;
  for (Eigen::Index i = 0; i < probe.rows(); ++i) {
    for (Eigen::Index j = 0; j < probe.cols(); ++j) {
      const double original = probe(i, j);
      probe(i, j) = original + eps;
      const double up = unrolled_outer_loss(head, probe, support.labels, hard,
                                            steps, alpha, clip_norm);
      probe(i, j) = original - eps;
      const double down = unrolled_outer_loss(head, probe, support.labels, hard,
                                              steps, alpha, clip_norm);
      probe(i, j) = original;
      grad(i, j) = (up - down) / (2.0 * eps);
    }
  }
  return grad;
}

}  // namespace hsfm
