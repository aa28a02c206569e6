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

#ifndef HSFM_HARDSET_HPP_
#define HSFM_HARDSET_HPP_

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "hsfm/featurestore.hpp"
#include "hsfm/linhead.hpp"

namespace hsfm {

// The highest-loss validation rows per class under some head. Features are
// frozen copies; only the selection changes between refreshes.
struct HardSet {
  Eigen::MatrixXd features;  // m x d
  std::vector<std::uint32_t> labels;
  std::vector<std::size_t> source_rows;
  std::vector<double> losses_at_selection;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
};

// For each class c (ascending), the min(k_hard, |c|) rows with the largest
// loss under `head`. Ties go to the lower row index.
HardSet build_hard_set(const LinearHead& head, const FeatureDataset& val,
                       std::size_t k_hard);

// Mean cross-entropy of `head` on the hard set.
double hard_set_loss(const LinearHead& head, const HardSet& hard);

}  // namespace hsfm

#endif  // HSFM_HARDSET_HPP_
