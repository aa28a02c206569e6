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

#ifndef HSFM_SYNTHGEN_HPP_
#define HSFM_SYNTHGEN_HPP_

#include <cstdint>
#include <vector>

#include "hsfm/featurestore.hpp"

namespace hsfm {

// counts[y][a] = number of samples with class y and environment a.
using GroupCounts = std::vector<std::vector<std::size_t>>;

// Gaussian class/environment mixture with a controllable spurious channel.
// Feature layout per row: [core | spurious | noise].
struct SynthConfig {
  std::uint32_t class_count = 2;
  std::uint32_t env_count = 2;
  std::uint32_t d_core = 5;
  std::uint32_t d_spur = 5;
  std::uint32_t d_noise = 10;
  double mu_core = 1.0;
  double mu_spur = 2.0;
  double sigma = 1.0;
  GroupCounts train_group_counts;
  GroupCounts val_group_counts;
  GroupCounts test_group_counts;
  std::uint64_t seed = 0;

  std::uint32_t dim() const { return d_core + d_spur + d_noise; }
  std::uint32_t group_count() const { return class_count * env_count; }

  // Throws ValidationError on any broken invariant.
  void validate() const;

  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

// The repository's standard benchmark: 2 classes x 2 environments with a
// 95/5 spurious split in training and balanced val/test.
inline constexpr std::uint64_t kBenchmarkSeed = 6;

SynthConfig synth_waterbirds(std::uint64_t seed = kBenchmarkSeed);

// Group id composition used by the generator.
inline std::uint32_t group_of(std::uint32_t label, std::uint32_t env,
                              std::uint32_t env_count) {
  return label * env_count + env;
}

// Mean pattern of a class (or environment) over a block of `dims`
// coordinates: +-1 on every coordinate when `values` == 2, otherwise a
// one-hot block of width dims / values.
std::vector<double> mean_pattern(std::uint32_t value, std::uint32_t values,
                                 std::uint32_t dims);

DatasetSplit generate(const SynthConfig& cfg);

// Accuracy of the optimal linear rule restricted to the core coordinates,
// Phi(mu_core * sqrt(d_core) / sigma). Identical for every group. C = 2 only.
double bayes_core_accuracy(const SynthConfig& cfg);

}  // namespace hsfm

#endif  // HSFM_SYNTHGEN_HPP_
