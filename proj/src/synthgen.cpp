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

#include "hsfm/synthgen.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "hsfm/errors.hpp"
#include "hsfm/rng.hpp"

namespace hsfm {

namespace {

void check_counts(const GroupCounts& counts, const SynthConfig& cfg,
                  const char* name) {
  if (counts.size() != cfg.class_count) {
    throw ValidationError(std::string(name) + " must have " +
                          std::to_string(cfg.class_count) + " rows");
  }
  for (const auto& row : counts) {
    if (row.size() != cfg.env_count) {
      throw ValidationError(std::string(name) + " rows must have " +
                            std::to_string(cfg.env_count) + " entries");
    }
  }
}

std::size_t total(const GroupCounts& counts) {
  std::size_t n = 0;
  for (const auto& row : counts) {
    for (std::size_t c : row) n += c;
  }
  return n;
}

FeatureDataset sample_split(const SynthConfig& cfg, const GroupCounts& counts,
                            std::uint64_t stream) {
  Rng rng = Rng::derive(cfg.seed, stream);
  const std::uint32_t d = cfg.dim();
  const std::size_t n = total(counts);
  FeatureMatrix features(static_cast<Eigen::Index>(n), d);
  std::vector<std::uint32_t> labels;
  std::vector<std::uint32_t> groups;
  labels.reserve(n);
  groups.reserve(n);

  Eigen::Index row = 0;
  for (std::uint32_t y = 0; y < cfg.class_count; ++y) {
    const auto core = mean_pattern(y, cfg.class_count, cfg.d_core);
    for (std::uint32_t a = 0; a < cfg.env_count; ++a) {
      const auto spur = mean_pattern(a, cfg.env_count, cfg.d_spur);
      for (std::size_t k = 0; k < counts[y][a]; ++k, ++row) {
        Eigen::Index col = 0;
        for (double u : core) {
          features(row, col++) =
              static_cast<float>(cfg.mu_core * u + cfg.sigma * rng.normal());
        }
        for (double v : spur) {
          features(row, col++) =
              static_cast<float>(cfg.mu_spur * v + cfg.sigma * rng.normal());
        }
        for (std::uint32_t j = 0; j < cfg.d_noise; ++j) {
          features(row, col++) = static_cast<float>(cfg.sigma * rng.normal());
        }
        labels.push_back(y);
        groups.push_back(group_of(y, a, cfg.env_count));
      }
    }
  }
  return FeatureDataset(std::move(features), std::move(labels),
                        std::move(groups), cfg.class_count, cfg.group_count());
}

}  // namespace

void SynthConfig::validate() const {
  if (class_count < 2) throw ValidationError("class_count must be >= 2");
  if (env_count < 1) throw ValidationError("env_count must be >= 1");
  if (dim() < 1) throw ValidationError("d_core + d_spur + d_noise must be >= 1");
  if (class_count > 2 && d_core > 0 && d_core < class_count) {
    throw ValidationError("d_core must be >= class_count for one-hot class blocks");
  }
  if (env_count > 2 && d_spur > 0 && d_spur < env_count) {
    throw ValidationError("d_spur must be >= env_count for one-hot env blocks");
  }
  if (!(mu_core >= 0.0) || !std::isfinite(mu_core)) {
    throw ValidationError("mu_core must be finite and >= 0");
  }
  if (!(mu_spur >= 0.0) || !std::isfinite(mu_spur)) {
    throw ValidationError("mu_spur must be finite and >= 0");
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw ValidationError("sigma must be finite and > 0");
  }
  check_counts(train_group_counts, *this, "train_group_counts");
  check_counts(val_group_counts, *this, "val_group_counts");
  check_counts(test_group_counts, *this, "test_group_counts");
  if (total(train_group_counts) == 0) {
    throw ValidationError("synthetic config has zero training samples");
  }
}

SynthConfig synth_waterbirds(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.train_group_counts = {{1000, 50}, {50, 1000}};
  cfg.val_group_counts = {{200, 200}, {200, 200}};
  cfg.test_group_counts = {{200, 200}, {200, 200}};
  cfg.seed = seed;
  return cfg;
}

std::vector<double> mean_pattern(std::uint32_t value, std::uint32_t values,
                                 std::uint32_t dims) {
  std::vector<double> pattern(dims, 0.0);
  if (values == 2) {
    const double sign = value == 0 ? -1.0 : 1.0;
    for (auto& p : pattern) p = sign;
    return pattern;
  }
  const std::uint32_t block = dims / values;
  for (std::uint32_t j = value * block; j < (value + 1) * block; ++j) {
    pattern[j] = 1.0;
  }
  return pattern;
}

DatasetSplit generate(const SynthConfig& cfg) {
  cfg.validate();
  DatasetSplit split{sample_split(cfg, cfg.train_group_counts, 0),
                     sample_split(cfg, cfg.val_group_counts, 1),
                     sample_split(cfg, cfg.test_group_counts, 2)};
  split.validate();
  return split;
}

double bayes_core_accuracy(const SynthConfig& cfg) {
  if (cfg.class_count != 2) {
    throw UnsupportedConfigError(
        "bayes_core_accuracy is only defined for class_count = 2");
  }
  const double z =
      cfg.mu_core * std::sqrt(static_cast<double>(cfg.d_core)) / cfg.sigma;
  return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

}  // namespace hsfm
