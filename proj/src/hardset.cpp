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

#include "hsfm/hardset.hpp"

#include <algorithm>
#include <numeric>

#include <spdlog/spdlog.h>

#include "hsfm/errors.hpp"

namespace hsfm {

HardSet build_hard_set(const LinearHead& head, const FeatureDataset& val,
                       std::size_t k_hard) {
  if (k_hard < 1) throw ValidationError("k_hard must be >= 1");
  if (val.is_empty()) throw EmptyInputError("validation set is empty");
  if (head.class_count() != val.class_count()) {
    throw ShapeError("head and validation set disagree on class count");
  }

  const Eigen::MatrixXd x = val.features_double();
  const auto labels = val.labels();
  const Eigen::VectorXd losses = per_example_losses(head, x, labels);

  std::vector<std::vector<std::size_t>> by_class(val.class_count());
  for (std::size_t i = 0; i < val.size(); ++i) by_class[labels[i]].push_back(i);

  HardSet hard;
  for (std::uint32_t c = 0; c < val.class_count(); ++c) {
    auto& rows = by_class[c];
    if (rows.empty()) {
      spdlog::warn("class {} has no validation rows; it contributes nothing "
                   "to the hard set",
                   c);
      continue;
    }
    const std::size_t take = std::min(k_hard, rows.size());
    const auto harder = [&](std::size_t a, std::size_t b) {
      const double la = losses(static_cast<Eigen::Index>(a));
      const double lb = losses(static_cast<Eigen::Index>(b));
      return la != lb ? la > lb : a < b;
    };
    std::partial_sort(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(take),
                      rows.end(), harder);
    hard.source_rows.insert(hard.source_rows.end(), rows.begin(),
                            rows.begin() + static_cast<std::ptrdiff_t>(take));
  }

  hard.features.resize(static_cast<Eigen::Index>(hard.source_rows.size()), x.cols());
  hard.labels.reserve(hard.source_rows.size());
  hard.losses_at_selection.reserve(hard.source_rows.size());
  for (std::size_t k = 0; k < hard.source_rows.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(hard.source_rows[k]);
    hard.features.row(static_cast<Eigen::Index>(k)) = x.row(r);
    hard.labels.push_back(labels[hard.source_rows[k]]);
    hard.losses_at_selection.push_back(losses(r));
  }
  return hard;
}

double hard_set_loss(const LinearHead& head, const HardSet& hard) {
  if (hard.empty()) throw EmptyInputError("hard set is empty");
  return per_example_losses(head, hard.features, hard.labels).mean();
}

}  // namespace hsfm
