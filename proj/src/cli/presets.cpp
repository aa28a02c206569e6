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

#include <map>

#include "hsfm/cli/config.hpp"

namespace hsfm::cli {

namespace {

HsfmConfig row(std::size_t per_class, std::size_t t, double inner_lr,
               double outer_lr, std::size_t meta_steps, std::size_t k_hard,
               std::size_t epochs) {
  HsfmConfig cfg;
  cfg.support_per_class = per_class;
  cfg.inner_steps = t;
  cfg.inner_lr = inner_lr;
  cfg.outer_lr = outer_lr;
  cfg.meta_steps = meta_steps;
  cfg.k_hard = k_hard;
  cfg.epochs = epochs;
  return cfg;
}

const std::map<std::string, HsfmConfig>& presets() {
  static const std::map<std::string, HsfmConfig> table = [] {
    std::map<std::string, HsfmConfig> t;
    // Desk-scale benchmark, tuned on the synthetic generator.
    t[kSynthPreset] = row(16, 10, 1e-2, 20.0, 10, 32, 20);

    // Published per-backbone settings; the ERM rate equals the inner rate.
    t["celeba-resnet"] = row(1024, 10, 5e-5, 1e-1, 5, 256, 20);
    t["waterbirds-resnet"] = row(16, 15, 5e-5, 1.0, 15, 64, 40);
    t["metashift-resnet"] = row(32, 15, 5e-5, 1e-2, 10, 64, 10);
    t["dominoes-resnet"] = row(16, 10, 1e-4, 1.0, 15, 256, 40);

    t["celeba-vit"] = row(1024, 10, 1e-4, 1.0, 15, 256, 50);
    t["waterbirds-vit"] = row(128, 10, 1e-4, 1.0, 15, 32, 40);
    t["metashift-vit"] = row(64, 10, 1e-5, 1e-2, 10, 8, 30);
    t["dominoes-vit"] = row(128, 10, 1e-4, 1.0, 15, 256, 40);

    t["celeba-convnext"] = row(32, 10, 1e-4, 1.0, 15, 8, 40);
    t["waterbirds-convnext"] = row(128, 10, 1e-4, 1.0, 15, 16, 40);

    // Fine-grained classification: 16 vectors per class, 40 iterations of
    // 15 inner + 15 ERM steps, top-64 per class, global clip at 10, adaptive
    // meta steps at 5e-5 and head rate 1e-3.
    HsfmConfig fine = row(16, 15, 1e-3, 5e-5, 15, 64, 40);
    fine.clip_norm = 10.0;
    fine.outer_optimizer = OuterOptimizerKind::adaptive;
    t["fine-grained-resnet"] = fine;
    return t;
  }();
  return table;
}

}  // namespace

std::optional<HsfmConfig> find_preset(const std::string& name) {
  const auto& table = presets();
  const auto it = table.find(name);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& [name, cfg] : presets()) names.push_back(name);
  return names;
}

}  // namespace hsfm::cli
