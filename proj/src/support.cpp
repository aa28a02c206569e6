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
#include <numeric>

#include <spdlog/spdlog.h>

#include "hsfm/errors.hpp"
#include "hsfm/metaopt.hpp"
#include "hsfm/rng.hpp"

namespace hsfm {

SupportSet init_support(const FeatureDataset& train, std::size_t per_class,
                        std::uint64_t seed) {
  if (per_class < 1) throw ValidationError("support_per_class must be >= 1");
  std::vector<std::vector<std::size_t>> by_class(train.class_count());
  const auto labels = train.labels();
  for (std::size_t i = 0; i < train.size(); ++i) by_class[labels[i]].push_back(i);

  Rng rng = Rng::derive(seed, 0x5u);
  SupportSet support;
  support.class_count = train.class_count();
  support.group_count = train.group_count();
  for (std::uint32_t c = 0; c < train.class_count(); ++c) {
    auto& rows = by_class[c];
    if (rows.empty()) {
      throw ValidationError("class " + std::to_string(c) +
                            " has no training rows to seed the support set");
    }
    std::vector<std::size_t> picked;
    if (rows.size() >= per_class) {
      // Partial Fisher-Yates.
      for (std::size_t k = 0; k < per_class; ++k) {
        const std::size_t j = k + rng.bounded(rows.size() - k);
        std::swap(rows[k], rows[j]);
      }
      picked.assign(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(per_class));
      std::sort(picked.begin(), picked.end());
    } else {
      spdlog::info("class {} has only {} training rows; sampling {} support "
                   "rows with replacement",
                   c, rows.size(), per_class);
      for (std::size_t k = 0; k < per_class; ++k) {
        picked.push_back(rows[rng.bounded(rows.size())]);
      }
    }
    for (std::size_t r : picked) {
      support.source_rows.push_back(r);
      support.labels.push_back(c);
      support.source_groups.push_back(train.groups()[r]);
    }
  }

  const auto& features = train.features();
  support.embeddings.resize(static_cast<Eigen::Index>(support.size()), train.dim());
  for (std::size_t k = 0; k < support.size(); ++k) {
    support.embeddings.row(static_cast<Eigen::Index>(k)) =
        features.row(static_cast<Eigen::Index>(support.source_rows[k])).cast<double>();
  }
  support.initial_embeddings = support.embeddings;
  return support;
}

std::filesystem::path with_suffix(const std::filesystem::path& base,
                                  const std::string& suffix) {
  std::filesystem::path out = base;
  out += suffix;
  return out;
}

namespace {

FeatureDataset as_dataset(const SupportSet& support, const Eigen::MatrixXd& h) {
  return FeatureDataset(h.cast<float>(), support.labels, support.source_groups,
                        support.class_count, support.group_count);
}

}  // namespace

void export_support(const SupportSet& support,
                    const std::filesystem::path& base) {
  write_features(with_suffix(base, ".init"),
                 as_dataset(support, support.initial_embeddings));
  write_features(with_suffix(base, ".opt"), as_dataset(support, support.embeddings));
}

SupportExport read_support_export(const std::filesystem::path& base) {
  return {read_features(with_suffix(base, ".init")),
          read_features(with_suffix(base, ".opt"))};
}

}  // namespace hsfm
