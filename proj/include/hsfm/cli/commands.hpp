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

#ifndef HSFM_CLI_COMMANDS_HPP_
#define HSFM_CLI_COMMANDS_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hsfm/cli/config.hpp"
#include "hsfm/featurestore.hpp"
#include "hsfm/hardset.hpp"
#include "hsfm/linhead.hpp"
#include "hsfm/metaopt.hpp"
#include "hsfm/rng.hpp"

namespace hsfm::cli {

// Generated in memory for synthetic sources, read from disk otherwise.
DatasetSplit load_data(const RunConfig& cfg);

// The ERM head HSFM and DFR start from: the configured checkpoint, or a
// zero-initialized head trained with cfg.erm on the training split.
LinearHead obtain_erm_head(const RunConfig& cfg, const DatasetSplit& split);

nlohmann::json report_to_json(const EvalReport& report);
nlohmann::json record_to_json(const EpochRecord& record);
nlohmann::json hard_set_to_json(const HardSet& hard);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_file(const std::filesystem::path& path);

// Writes train/val/test HSFM-FS files and manifest.json. Returns the manifest.
nlohmann::json cmd_gen_data(const RunConfig& cfg);

struct HeadRun {
  LinearHead head;
  EvalReport val;
  EvalReport test;
};

HeadRun cmd_train_erm(const RunConfig& cfg);
HeadRun cmd_train_dfr(const RunConfig& cfg);

struct HsfmRun {
  HeadRun erm;
  HeadRun hsfm;
  HsfmResult detail;
};

HsfmRun cmd_train_hsfm(const RunConfig& cfg);

// One HSFM run from a given ERM head, writing its artifacts under `out`.
HsfmRun run_hsfm_into(const RunConfig& cfg, const DatasetSplit& split,
                      const HeadRun& erm, const std::filesystem::path& out);

struct SweepPoint {
  std::size_t value = 0;
  bool ok = false;
  double worst_group_accuracy = 0.0;
  double average_accuracy = 0.0;
  std::string error;
};

// One HSFM run per value on the configured axis; writes sweep.csv. A point
// that throws is recorded as failed and the sweep continues.
std::vector<SweepPoint> cmd_sweep(const RunConfig& cfg);

std::string sweep_csv(SweepAxis axis, const std::vector<SweepPoint>& points);

struct GradInstance {
  LinearHead head;
  SupportSet support;
  HardSet hard;
  std::size_t steps = 0;
  double alpha = 0.0;
};

// Random head/support/hard set with the given shape.
GradInstance make_grad_instance(Rng& rng, std::uint32_t classes,
                                std::uint32_t dim, std::size_t support_size,
                                std::size_t hard_size, std::size_t steps,
                                double alpha);

// Entry-wise relative error; entries whose absolute difference is within
// abs_floor count as exact.
double max_relative_error(const Eigen::MatrixXd& analytic,
                          const Eigen::MatrixXd& numeric, double abs_floor);

struct GradCheckCase {
  std::uint32_t classes = 0;
  std::uint32_t dim = 0;
  std::size_t support_size = 0;
  std::size_t hard_size = 0;
  std::size_t steps = 0;
  double alpha = 0.0;
  double max_rel_error = 0.0;
  // Same comparison with no absolute floor, and the gradient's scale.
  double unfloored_rel_error = 0.0;
  double max_abs_gradient = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckCase> cases;
  bool zero_unroll_exact = false;
  double max_rel_error = 0.0;
  double unfloored_rel_error = 0.0;
  bool passed = false;
};

// The meta-gradient self-check: analytic vs central differences over
// randomized small instances covering T in {1,2,3,5}, d in {2,6,16},
// C in {2,3}, plus the T = 0 exact-zero case.
GradCheckReport run_gradient_check(const CheckGradSettings& settings);
nlohmann::json grad_report_to_json(const GradCheckReport& report);

// Runs the suite and writes check_grad.json.
GradCheckReport cmd_check_grad(const RunConfig& cfg);

// Evaluates cfg.evaluate.head on cfg.evaluate.data; writes report.json.
EvalReport cmd_evaluate(const RunConfig& cfg);

// Writes the resolved config next to a command's outputs.
void write_resolved_config(const RunConfig& cfg, const std::filesystem::path& out);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace hsfm::cli

#endif  // HSFM_CLI_COMMANDS_HPP_
