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

#ifndef HSFM_CLI_CONFIG_HPP_
#define HSFM_CLI_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hsfm/linhead.hpp"
#include "hsfm/metaopt.hpp"
#include "hsfm/synthgen.hpp"

namespace hsfm::cli {

struct DataFiles {
  std::filesystem::path train;
  std::filesystem::path val;
  std::filesystem::path test;
};

// Exactly one of the two is set after parsing; the synthetic benchmark when
// the config names neither.
struct DataSource {
  std::optional<SynthConfig> synth;
  std::optional<DataFiles> files;
};

struct DfrSettings {
  ErmOptions erm{500, 0.1, std::nullopt, 0.0};
  DfrBalance balance = DfrBalance::by_group;
};

enum class SweepAxis { inner_steps, support_per_class };

struct SweepSettings {
  SweepAxis axis = SweepAxis::inner_steps;
  std::vector<std::size_t> values;
  // Same run seed for every point, or seed + point index.
  bool shared_seed = true;
};

struct CheckGradSettings {
  std::size_t instances = 24;
  std::uint64_t seed = 7;
  double eps = 1e-4;
  double rel_tol = 1e-4;
  double abs_floor = 1e-7;
  bool mutate_sign_flip = false;
};

struct EvaluateSettings {
  std::filesystem::path head;
  std::filesystem::path data;
};

struct RunConfig {
  DataSource data;
  ErmOptions erm{500, 0.1, std::nullopt, 0.0};
  HsfmConfig hsfm;
  DfrSettings dfr;
  std::optional<std::filesystem::path> erm_checkpoint;
  SweepSettings sweep;
  CheckGradSettings check_grad;
  EvaluateSettings evaluate;
  std::filesystem::path out = "hsfm-out";
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

// Command-line overrides layered on top of the config file.
struct Overrides {
  std::optional<std::string> preset;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

// Resolution order: built-in defaults, then the preset (the --preset flag
// wins over the file's "preset" key), then explicit "hsfm" fields, then the
// remaining overrides. Unknown keys and ill-typed values throw
// ValidationError.
RunConfig parse_config(const nlohmann::json& doc, const Overrides& overrides = {});
RunConfig load_config(const std::filesystem::path& path,
                      const Overrides& overrides = {});

// Fully resolved config; feeding it back to parse_config reproduces the run.
nlohmann::json to_json(const RunConfig& cfg);
nlohmann::json to_json(const SynthConfig& cfg);
nlohmann::json to_json(const HsfmConfig& cfg);

SynthConfig parse_synth(const nlohmann::json& doc);

// Published per-dataset settings plus the tuned synthetic preset.
std::optional<HsfmConfig> find_preset(const std::string& name);
std::vector<std::string> preset_names();

// Name of the default HSFM preset and canonical synthetic benchmark.
inline constexpr const char* kSynthPreset = "synth-waterbirds";

// Validates files exist (when data comes from files) and cross-field rules.
void validate(const RunConfig& cfg);

std::string to_string(SweepAxis axis);

}  // namespace hsfm::cli

#endif  // HSFM_CLI_CONFIG_HPP_
