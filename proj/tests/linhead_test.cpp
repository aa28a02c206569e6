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
#include <limits>
#include <numeric>

#include <gtest/gtest.h>

#include "hsfm/errors.hpp"
#include "hsfm/rng.hpp"
#include "hsfm/synthgen.hpp"
#include "test_util.hpp"

namespace hsfm {
namespace {

LinearHead random_head(Rng& rng, std::uint32_t c, std::uint32_t d) {
  LinearHead head = LinearHead::zeros(c, d);
  for (Eigen::Index i = 0; i < head.weights.size(); ++i) head.weights.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < head.bias.size(); ++i) head.bias(i) = rng.normal();
  return head;
}

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

std::vector<std::uint32_t> random_labels(Rng& rng, std::size_t n, std::uint32_t c) {
  std::vector<std::uint32_t> y(n);
  for (auto& v : y) v = static_cast<std::uint32_t>(rng.bounded(c));
  return y;
}

TEST(LinHeadTest, LogitsExamples) {
  LinearHead head = LinearHead::zeros(2, 3);
  head.bias << 1, 2;
  EXPECT_EQ(logits(head, Eigen::Vector3d(7, -1, 4)), Eigen::Vector2d(1, 2));

  LinearHead id = LinearHead::zeros(2, 2);
  id.weights.setIdentity();
  EXPECT_EQ(logits(id, Eigen::Vector2d(3, 4)), Eigen::Vector2d(3, 4));

  EXPECT_THROW(logits(id, Eigen::Vector3d(1, 2, 3)), ShapeError);
}

TEST(LinHeadTest, LogitsMatchElementwiseOracle) {
  Rng rng(1);
  const LinearHead head = random_head(rng, 4, 7);
  const Eigen::VectorXd h = random_matrix(rng, 7, 1);
  const Eigen::VectorXd z = logits(head, h);
  for (int c = 0; c < 4; ++c) {
    double acc = head.bias(c);
    for (int j = 0; j < 7; ++j) acc += head.weights(c, j) * h(j);
    EXPECT_NEAR(z(c), acc, 1e-12);
  }
}

TEST(LinHeadTest, CrossEntropyExamples) {
  EXPECT_NEAR(cross_entropy(Eigen::Vector2d(0, 0), 0), std::log(2.0), 1e-12);
  const double big = cross_entropy(Eigen::Vector2d(1000, 0), 0);
  EXPECT_TRUE(std::isfinite(big));
  EXPECT_NEAR(big, 0.0, 1e-12);
  EXPECT_NEAR(cross_entropy(Eigen::Vector2d(0, 1000), 0), 1000.0, 1e-9);
  // Direct log-sum-exp: ln(e + e^2 + e^3) - 3.
  const double oracle = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)) - 3.0;
  EXPECT_NEAR(cross_entropy(Eigen::Vector3d(1, 2, 3), 2), oracle, 1e-12);
  EXPECT_NEAR(cross_entropy(Eigen::Vector3d(1, 2, 3), 2), 0.40760596, 1e-8);
  EXPECT_THROW(cross_entropy(Eigen::Vector2d(0, 0), 2), ValidationError);
}

TEST(LinHeadTest, CrossEntropyShiftInvariance) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd z = 5.0 * random_matrix(rng, 4, 1);
    const auto y = static_cast<std::uint32_t>(rng.bounded(4));
    const double shift = 100.0 * rng.normal();
    const Eigen::VectorXd shifted = z.array() + shift;
    EXPECT_NEAR(cross_entropy(shifted, y), cross_entropy(z, y), 1e-6);
    EXPECT_GE(cross_entropy(z, y), 0.0);
  }
}

TEST(LinHeadTest, LossGradLogitsExamplesAndProperties) {
  EXPECT_TRUE(loss_grad_logits(Eigen::Vector2d(0, 0), 0).isApprox(Eigen::Vector2d(-0.5, 0.5)));
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd z = 3.0 * random_matrix(rng, 5, 1);
    const auto y = static_cast<std::uint32_t>(rng.bounded(5));
    const Eigen::VectorXd g = loss_grad_logits(z, y);
    EXPECT_NEAR(g.sum(), 0.0, 1e-12);
    EXPECT_GT(g.minCoeff(), -1.0);
    EXPECT_LT(g.maxCoeff(), 1.0);
    // Central finite differences of cross_entropy.
    for (int c = 0; c < 5; ++c) {
      const double eps = 1e-5;
      Eigen::VectorXd up = z, down = z;
      up(c) += eps;
      down(c) -= eps;
      const double fd = (cross_entropy(up, y) - cross_entropy(down, y)) / (2 * eps);
      EXPECT_NEAR(g(c), fd, 1e-6);
    }
  }
}

TEST(LinHeadTest, BatchSingleExampleIsOuterProduct) {
  Rng rng(4);
  const LinearHead head = random_head(rng, 3, 4);
  const Eigen::MatrixXd x = random_matrix(rng, 1, 4);
  const std::vector<std::uint32_t> y = {2};
  const auto out = batch_loss_and_grads(head, x, y);
  const Eigen::VectorXd z = logits(head, x.row(0).transpose());
  const Eigen::VectorXd r = loss_grad_logits(z, 2);
  EXPECT_NEAR(out.mean_loss, cross_entropy(z, 2), 1e-12);
  EXPECT_TRUE(out.grad_weights.isApprox(r * x.row(0), 1e-12));
  EXPECT_TRUE(out.grad_bias.isApprox(r, 1e-12));
}

TEST(LinHeadTest, BatchDuplicationInvariance) {
  Rng rng(5);
  const LinearHead head = random_head(rng, 3, 4);
  const Eigen::MatrixXd x = random_matrix(rng, 6, 4);
  const auto y = random_labels(rng, 6, 3);
  Eigen::MatrixXd x2(12, 4);
  x2 << x, x;
  std::vector<std::uint32_t> y2 = y;
  y2.insert(y2.end(), y.begin(), y.end());
  const auto a = batch_loss_and_grads(head, x, y);
  const auto b = batch_loss_and_grads(head, x2, y2);
  EXPECT_NEAR(a.mean_loss, b.mean_loss, 1e-12);
  EXPECT_TRUE(a.grad_weights.isApprox(b.grad_weights, 1e-12));
  EXPECT_TRUE(a.grad_bias.isApprox(b.grad_bias, 1e-12));
}

TEST(LinHeadTest, BatchGradsMatchFiniteDifferences) {
  Rng rng(6);
  const LinearHead head = random_head(rng, 3, 5);
  const Eigen::MatrixXd x = random_matrix(rng, 8, 5);
  const auto y = random_labels(rng, 8, 3);
  const auto out = batch_loss_and_grads(head, x, y);
  const double eps = 1e-6;
  const auto loss_at = [&](const LinearHead& h) {
    return batch_loss_and_grads(h, x, y).mean_loss;
  };
  const auto close = [](double a, double f) {
    return std::abs(a - f) <= 1e-5 * std::max(std::abs(f), 1e-3);
  };
  for (Eigen::Index i = 0; i < head.weights.size(); ++i) {
    LinearHead up = head, down = head;
    up.weights.data()[i] += eps;
    down.weights.data()[i] -= eps;
    const double fd = (loss_at(up) - loss_at(down)) / (2 * eps);
    EXPECT_PRED2(close, out.grad_weights.data()[i], fd);
  }
  for (Eigen::Index c = 0; c < head.bias.size(); ++c) {
    LinearHead up = head, down = head;
    up.bias(c) += eps;
    down.bias(c) -= eps;
    const double fd = (loss_at(up) - loss_at(down)) / (2 * eps);
    EXPECT_PRED2(close, out.grad_bias(c), fd);
  }
}

TEST(LinHeadTest, BatchGradIsAverageOfParts) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const LinearHead head = random_head(rng, 2, 3);
    const std::size_t n = 2 + rng.bounded(20);
    const std::size_t k = 1 + rng.bounded(n - 1);
    const Eigen::MatrixXd x = random_matrix(rng, static_cast<Eigen::Index>(n), 3);
    const auto y = random_labels(rng, n, 2);
    const auto full = batch_loss_and_grads(head, x, y);
    const auto first = batch_loss_and_grads(head, x.topRows(static_cast<Eigen::Index>(k)),
                                            std::span(y).first(k));
    const auto rest = batch_loss_and_grads(
        head, x.bottomRows(static_cast<Eigen::Index>(n - k)), std::span(y).subspan(k));
    const double wk = static_cast<double>(k) / static_cast<double>(n);
    EXPECT_TRUE(full.grad_weights.isApprox(wk * first.grad_weights +
                                               (1 - wk) * rest.grad_weights, 1e-10));
    EXPECT_NEAR(full.mean_loss, wk * first.mean_loss + (1 - wk) * rest.mean_loss, 1e-12);
  }
}

TEST(LinHeadTest, BatchErrors) {
  const LinearHead head = LinearHead::zeros(2, 3);
  EXPECT_THROW(batch_loss_and_grads(head, Eigen::MatrixXd(0, 3), {}), EmptyInputError);
  const std::vector<std::uint32_t> y = {0};
  EXPECT_THROW(batch_loss_and_grads(head, Eigen::MatrixXd::Zero(1, 4), y), ShapeError);
  const std::vector<std::uint32_t> bad = {5};
  EXPECT_THROW(batch_loss_and_grads(head, Eigen::MatrixXd::Zero(1, 3), bad), ValidationError);
}

TEST(LinHeadTest, ErmZeroStepsAndZeroRateAreIdentity) {
  Rng rng(8);
  const LinearHead head = random_head(rng, 2, 3);
  const Eigen::MatrixXd x = random_matrix(rng, 10, 3);
  const auto y = random_labels(rng, 10, 2);
  EXPECT_EQ(erm_train(head, x, y, ErmOptions{0, 0.5, std::nullopt, 0.0}), head);
  EXPECT_EQ(erm_train(head, x, y, ErmOptions{25, 0.0, std::nullopt, 0.0}), head);
}

TEST(LinHeadTest, ErmLossDecreasesOnSeparablePair) {
  Eigen::MatrixXd x(2, 2);
  x << 1, 0, -1, 0;
  const std::vector<std::uint32_t> y = {1, 0};
  LinearHead head = LinearHead::zeros(2, 2);
  double previous = batch_loss_and_grads(head, x, y).mean_loss;
  for (int step = 0; step < 50; ++step) {
    head = erm_train(head, x, y, ErmOptions{1, 0.1, std::nullopt, 0.0});
    const double loss = batch_loss_and_grads(head, x, y).mean_loss;
    EXPECT_LT(loss, previous) << "step " << step;
    previous = loss;
  }
}

TEST(LinHeadTest, ClipBoundsEachStep) {
  Rng rng(9);
  const Eigen::MatrixXd x = 1000.0 * random_matrix(rng, 6, 3);
  const auto y = random_labels(rng, 6, 2);
  const LinearHead head = LinearHead::zeros(2, 3);
  const auto g = batch_loss_and_grads(head, x, y);
  ASSERT_GT(std::sqrt(g.grad_weights.squaredNorm() + g.grad_bias.squaredNorm()), 10.0);
  const double lr = 0.01;
  const LinearHead next = erm_train(head, x, y, ErmOptions{1, lr, 10.0, 0.0});
  const double moved = std::sqrt((next.weights - head.weights).squaredNorm() +
                                 (next.bias - head.bias).squaredNorm());
  EXPECT_NEAR(moved, lr * 10.0, 1e-9);
  EXPECT_DOUBLE_EQ(clip_scale(g.grad_weights, g.grad_bias, std::nullopt), 1.0);
}

TEST(LinHeadTest, ErmDivergenceReportsStep) {
  Eigen::MatrixXd x(2, 1);
  x << 1e300, -1e300;
  const std::vector<std::uint32_t> y = {0, 1};
  try {
    erm_train(LinearHead::zeros(2, 1), x, y, ErmOptions{5, 1e300, std::nullopt, 0.0});
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_LE(e.step(), 1u);
  }
}

TEST(LinHeadTest, WeightDecayShrinksWeights) {
  LinearHead head = LinearHead::zeros(2, 1);
  head.weights << 1.0, -1.0;
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2, 1);
  const std::vector<std::uint32_t> y = {0, 1};
  const LinearHead next = erm_train(head, x, y, ErmOptions{1, 0.1, std::nullopt, 0.5});
  EXPECT_NEAR(next.weights(0, 0), 0.95, 1e-12);
  EXPECT_NEAR(next.weights(1, 0), -0.95, 1e-12);
}

FeatureDataset sign_dataset(const std::vector<std::pair<std::size_t, std::size_t>>& group_plan) {
  // Each group g gets (correct, wrong) rows for the head that predicts class 1
  // iff x > 0. Group g has label g / 2.
  std::vector<float> xs;
  std::vector<std::uint32_t> ys;
  std::vector<std::uint32_t> gs;
  for (std::size_t g = 0; g < group_plan.size(); ++g) {
    const std::uint32_t label = static_cast<std::uint32_t>(g / 2);
    const float good = label == 1 ? 1.0f : -1.0f;
    for (std::size_t k = 0; k < group_plan[g].first; ++k) {
      xs.push_back(good);
      ys.push_back(label);
      gs.push_back(static_cast<std::uint32_t>(g));
    }
    for (std::size_t k = 0; k < group_plan[g].second; ++k) {
      xs.push_back(-good);
      ys.push_back(label);
      gs.push_back(static_cast<std::uint32_t>(g));
    }
  }
  FeatureMatrix f(static_cast<Eigen::Index>(xs.size()), 1);
  for (std::size_t i = 0; i < xs.size(); ++i) f(static_cast<Eigen::Index>(i), 0) = xs[i];
  return FeatureDataset(f, ys, gs, 2, static_cast<std::uint32_t>(group_plan.size()));
}

LinearHead sign_head() {
  LinearHead head = LinearHead::zeros(2, 1);
  head.weights << -1.0, 1.0;
  return head;
}

TEST(LinHeadTest, EvaluatePerfectHead) {
  const auto report = evaluate(sign_head(), sign_dataset({{5, 0}, {3, 0}, {4, 0}, {2, 0}}));
  EXPECT_DOUBLE_EQ(report.worst_group_accuracy, 1.0);
  EXPECT_DOUBLE_EQ(report.average_accuracy, 1.0);
}

TEST(LinHeadTest, EvaluateWorstGroupIsMinimum) {
  const auto ds = sign_dataset({{18, 2}, {16, 4}, {19, 1}, {20, 0}});
  const auto report = evaluate(sign_head(), ds);
  EXPECT_DOUBLE_EQ(*report.per_group_accuracy[0], 0.9);
  EXPECT_DOUBLE_EQ(*report.per_group_accuracy[1], 0.8);
  EXPECT_DOUBLE_EQ(*report.per_group_accuracy[2], 0.95);
  EXPECT_DOUBLE_EQ(*report.per_group_accuracy[3], 1.0);
  EXPECT_DOUBLE_EQ(report.worst_group_accuracy, 0.8);
  EXPECT_DOUBLE_EQ(report.average_accuracy, 73.0 / 80.0);
  EXPECT_EQ(std::accumulate(report.per_group_counts.begin(), report.per_group_counts.end(),
                            std::size_t{0}),
            ds.size());
}

TEST(LinHeadTest, EvaluateSkipsEmptyGroups) {
  const auto report = evaluate(sign_head(), sign_dataset({{3, 1}, {0, 0}, {2, 0}, {1, 1}}));
  EXPECT_FALSE(report.per_group_accuracy[1].has_value());
  EXPECT_DOUBLE_EQ(report.worst_group_accuracy, 0.5);
}

TEST(LinHeadTest, TiesGoToLowestClass) {
  const LinearHead zero = LinearHead::zeros(3, 2);
  const auto p = predict(zero, Eigen::MatrixXd::Ones(4, 2));
  for (auto c : p) EXPECT_EQ(c, 0u);
}

TEST(LinHeadTest, PredictionsInvariantToPositiveRescaling) {
  Rng rng(10);
  const LinearHead head = random_head(rng, 4, 3);
  const Eigen::MatrixXd x = random_matrix(rng, 50, 3);
  LinearHead scaled = head;
  scaled.weights *= 3.7;
  scaled.bias *= 3.7;
  EXPECT_EQ(predict(head, x), predict(scaled, x));
}

TEST(LinHeadTest, EvaluateErrors) {
  EXPECT_THROW(evaluate(sign_head(), FeatureDataset::empty(1, 2, 1)), EmptyInputError);
  EXPECT_THROW(evaluate(LinearHead::zeros(3, 1), sign_dataset({{1, 0}})), ShapeError);
}

TEST(LinHeadTest, ErmOnBenchmarkReliesOnSpuriousFeatures) {
  const SynthConfig cfg = synth_waterbirds();
  const auto split = generate(cfg);
  const LinearHead head =
      erm_train(LinearHead::zeros(2, cfg.dim()), split.train, ErmOptions{500, 0.1, {}, 0.0});
  const auto report = evaluate(head, split.test);
  EXPECT_LT(report.worst_group_accuracy, bayes_core_accuracy(cfg) - 0.10);
  EXPECT_GE(report.average_accuracy - report.worst_group_accuracy, 0.05);
}

TEST(LinHeadTest, CheckpointRoundTrip) {
  Rng rng(12);
  LinearHead head = random_head(rng, 3, 4);
  head.weights = head.weights.cast<float>().cast<double>();
  head.bias = head.bias.cast<float>().cast<double>();
  const auto bytes = encode_head(head);
  EXPECT_EQ(bytes.size(), 16u + 4u * (12 + 3));
  EXPECT_EQ(decode_head(bytes), head);
  const auto dir = testing::scratch_dir("head");
  save_head(dir / "h.hsfh", head);
  EXPECT_EQ(load_head(dir / "h.hsfh"), head);
}

TEST(LinHeadTest, CheckpointErrors) {
  auto bytes = encode_head(LinearHead::zeros(2, 2));
  auto bad = bytes;
  bad[3] = 'M';
  EXPECT_THROW(decode_head(bad), MagicError);
  bad = bytes;
  bad[4] = 9;
  EXPECT_THROW(decode_head(bad), VersionError);
  bad = bytes;
  bad.pop_back();
  EXPECT_THROW(decode_head(bad), TruncationError);
}

}  // namespace
}  // namespace hsfm
