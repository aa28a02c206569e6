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

#include <algorithm>
#include <array>
#include <cmath>

#include "hsfm/cli/commands.hpp"

namespace hsfm::cli {

using nlohmann::json;

GradInstance make_grad_instance(Rng& rng, std::uint32_t classes,
                                std::uint32_t dim, std::size_t support_size,
                                std::size_t hard_size, std::size_t steps,
                                double alpha) {
  GradInstance inst;
  inst.steps = steps;
  inst.alpha = alpha;
  inst.head = LinearHead::zeros(classes, dim);
  for (Eigen::Index c = 0; c < inst.head.weights.rows(); ++c) {
    for (Eigen::Index j = 0; j < inst.head.weights.cols(); ++j) {
      inst.head.weights(c, j) = 0.5 * rng.normal();
    }
    inst.head.bias(c) = 0.5 * rng.normal();
  }

  SupportSet& sup = inst.support;
  sup.class_count = classes;
  sup.group_count = 1;
  sup.embeddings.resize(static_cast<Eigen::Index>(support_size), dim);
  for (std::size_t i = 0; i < support_size; ++i) {
    sup.labels.push_back(static_cast<std::uint32_t>(i % classes));
    sup.source_rows.push_back(i);
    sup.source_groups.push_back(0);
    for (std::uint32_t j = 0; j < dim; ++j) {
      sup.embeddings(static_cast<Eigen::Index>(i), j) = rng.normal();
    }
  }
  sup.initial_embeddings = sup.embeddings;

  HardSet& hard = inst.hard;
  hard.features.resize(static_cast<Eigen::Index>(hard_size), dim);
  for (std::size_t i = 0; i < hard_size; ++i) {
    hard.labels.push_back(static_cast<std::uint32_t>(rng.bounded(classes)));
    hard.source_rows.push_back(i);
    hard.losses_at_selection.push_back(0.0);
    for (std::uint32_t j = 0; j < dim; ++j) {
      hard.features(static_cast<Eigen::Index>(i), j) = rng.normal();
    }
  }
  return inst;
}

double max_relative_error(const Eigen::MatrixXd& analytic,
                          const Eigen::MatrixXd& numeric, double abs_floor) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double a = analytic.data()[i];
    const double f = numeric.data()[i];
    const double diff = std::abs(a - f);
    if (diff <= abs_floor) continue;
    worst = std::max(worst, diff / std::max(std::abs(a), std::abs(f)));
  }
  return worst;
}

GradCheckReport run_gradient_check(const CheckGradSettings& settings) {
  static constexpr std::array<std::size_t, 4> kSteps = {1, 2, 3, 5};
  static constexpr std::array<std::uint32_t, 3> kDims = {2, 6, 16};
  static constexpr std::array<std::uint32_t, 2> kClasses = {2, 3};
  static constexpr std::array<double, 2> kAlphas = {0.01, 0.1};

  Rng rng(settings.seed);
  MetaGradientOptions options;
  options.flip_hessian_sign = settings.mutate_sign_flip;

  GradCheckReport report;
  report.passed = true;
  for (std::size_t k = 0; k < settings.instances; ++k) {
    GradCheckCase c;
    c.steps = kSteps[k % kSteps.size()];
    c.dim = kDims[(k / kSteps.size()) % kDims.size()];
    c.classes = kClasses[(k / (kSteps.size() * kDims.size())) % kClasses.size()];
    c.alpha = kAlphas[rng.bounded(kAlphas.size())];
    c.support_size = c.classes + rng.bounded(12 - c.classes + 1);
    c.hard_size = 1 + rng.bounded(8);

    const GradInstance inst = make_grad_instance(rng, c.classes, c.dim, c.support_size,
                                                 c.hard_size, c.steps, c.alpha);
    const InnerResult inner = inner_adapt(inst.head, inst.support, c.steps, c.alpha);
    const Eigen::MatrixXd analytic =
        meta_gradient(inner.tape, inst.support, inst.hard, options);
    const Eigen::MatrixXd numeric = finite_diff_meta_gradient(
        inst.head, inst.support, inst.hard, c.steps, c.alpha, settings.eps);
    c.max_rel_error = max_relative_error(analytic, numeric, settings.abs_floor);
    c.unfloored_rel_error = max_relative_error(analytic, numeric, 0.0);
    c.max_abs_gradient = analytic.cwiseAbs().maxCoeff();
    c.passed = c.max_rel_error < settings.rel_tol;
    report.passed = report.passed && c.passed;
    report.max_rel_error = std::max(report.max_rel_error, c.max_rel_error);
    report.unfloored_rel_error = std::max(report.unfloored_rel_error, c.unfloored_rel_error);
    report.cases.push_back(c);
  }

  // With no inner steps the outer loss does not depend on H at all.
  const GradInstance zero = make_grad_instance(rng, 3, 6, 9, 6, 0, 0.1);
  const InnerResult inner = inner_adapt(zero.head, zero.support, 0, 0.1);
  const Eigen::MatrixXd g = meta_gradient(inner.tape, zero.support, zero.hard, options);
  report.zero_unroll_exact = (g.array() == 0.0).all();
  report.passed = report.passed && report.zero_unroll_exact;
  return report;
}

json grad_report_to_json(const GradCheckReport& report) {
  json cases = json::array();
  for (const auto& c : report.cases) {
    cases.push_back({{"classes", c.classes},
                     {"dim", c.dim},
                     {"support_size", c.support_size},
                     {"hard_size", c.hard_size},
                     {"T", c.steps},
                     {"alpha", c.alpha},
                     {"max_rel_error", c.max_rel_error},
                     {"unfloored_rel_error", c.unfloored_rel_error},
                     {"max_abs_gradient", c.max_abs_gradient},
                     {"passed", c.passed}});
  }
  return {{"passed", report.passed},
          {"max_rel_error", report.max_rel_error},
          {"unfloored_rel_error", report.unfloored_rel_error},
          {"zero_unroll_exact", report.zero_unroll_exact},
          {"cases", cases}};
}

}  // namespace hsfm::cli
