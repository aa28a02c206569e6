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

#include "hsfm/errors.hpp"
#include "hsfm/metaopt.hpp"
#include "hsfm/rng.hpp"

namespace hsfm {

std::string to_string(DfrBalance balance) {
  return balance == DfrBalance::by_group ? "by-group" : "by-class";
}

DfrBalance dfr_balance_from_string(const std::string& name) {
  if (name == "by-group") return DfrBalance::by_group;
  if (name == "by-class") return DfrBalance::by_class;
  throw ValidationError("unknown DFR balance '" + name +
                        "' (expected by-group or by-class)");
}

std::vector<std::size_t> balanced_rows(const FeatureDataset& val,
                                       DfrBalance balance, std::uint64_t seed) {
  if (val.is_empty()) throw EmptyInputError("DFR needs a nonempty validation set");
  const bool by_group = balance == DfrBalance::by_group;
  if (by_group && val.group_count() < 2) {
    throw ValidationError("by-group balancing needs group annotations (G > 1)");
  }
  const std::size_t buckets = by_group ? val.group_count() : val.class_count();
  const auto keys = by_group ? val.groups() : val.labels();

  std::vector<std::vector<std::size_t>> rows(buckets);
  for (std::size_t i = 0; i < val.size(); ++i) rows[keys[i]].push_back(i);
  std::size_t per_bucket = val.size();
  for (std::size_t b = 0; b < buckets; ++b) {
    if (rows[b].empty()) {
      if (by_group) {
        throw ValidationError("group " + std::to_string(b) +
                              " is empty; cannot balance by group");
      }
      continue;  // absent classes simply do not participate
    }
    per_bucket = std::min(per_bucket, rows[b].size());
  }

  Rng rng = Rng::derive(seed, 0xdf5u);
  std::vector<std::size_t> picked;
  for (auto& bucket : rows) {
    if (bucket.empty()) continue;
    for (std::size_t k = 0; k < per_bucket; ++k) {
      std::swap(bucket[k], bucket[k + rng.bounded(bucket.size() - k)]);
    }
    picked.insert(picked.end(), bucket.begin(),
                  bucket.begin() + static_cast<std::ptrdiff_t>(per_bucket));
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

LinearHead dfr_baseline(const LinearHead& head0, const FeatureDataset& val,
                        const ErmOptions& options, DfrBalance balance,
                        std::uint64_t seed) {
  const auto rows = balanced_rows(val, balance, seed);
  return erm_train(head0, val.select_rows(rows), options);
}

}  // namespace hsfm
