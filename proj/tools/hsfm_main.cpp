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

// hsfm: command-line harness for data generation, training and checks.

#include <cstdlib>
#include <iostream>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "hsfm/cli/commands.hpp"
#include "hsfm/errors.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("hsfm");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* level = std::getenv("HSFM_LOG")) {
    spdlog::set_level(spdlog::level::from_str(level));
  }
}

void print_report(const std::string& label, const hsfm::EvalReport& r) {
  std::cout << label << ": worst-group " << r.worst_group_accuracy
            << ", average " << r.average_accuracy << ", loss " << r.mean_loss
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Hard-set-guided feature-space meta-learning on frozen embeddings"};
  app.require_subcommand(1);

  std::string config_path;
  hsfm::cli::Overrides overrides;
  std::string preset;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run config")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--preset", preset, "HSFM hyperparameter preset");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--seed", seed, "run seed (overrides config)");
    sub->add_option("--threads", threads, "worker threads for sweeps")
        ->check(CLI::PositiveNumber);
  };

  const char* names[][2] = {
      {"gen-data", "generate synthetic train/val/test feature files"},
      {"train-erm", "train the ERM linear head"},
      {"train-dfr", "retrain the head on a balanced validation subset"},
      {"train-hsfm", "run HSFM meta-learning from an ERM head"},
      {"evaluate", "evaluate a head checkpoint on a feature file"},
      {"sweep", "HSFM runs across T or support size"},
      {"check-grad", "verify meta-gradients against finite differences"},
  };
  for (const auto& [name, help] : names) add_common(app.add_subcommand(name, help));

  CLI11_PARSE(app, argc, argv);
  CLI::App* sub = app.get_subcommands().front();
  if (sub->count("--preset")) overrides.preset = preset;
  if (sub->count("--out")) overrides.out = out;
  if (sub->count("--seed")) overrides.seed = seed;
  if (sub->count("--threads")) overrides.threads = threads;

  namespace cli = hsfm::cli;
  try {
    const cli::RunConfig cfg = cli::load_config(config_path, overrides);
    const std::string command = sub->get_name();
    if (command == "gen-data") {
      const auto manifest = cli::cmd_gen_data(cfg);
      for (const auto& [split, info] : manifest["files"].items()) {
        std::cout << split << ": " << info["n"] << " rows, sha256 "
                  << info["sha256"].get<std::string>() << "\n";
      }
    } else if (command == "train-erm") {
      const auto run = cli::cmd_train_erm(cfg);
      print_report("erm test", run.test);
    } else if (command == "train-dfr") {
      const auto run = cli::cmd_train_dfr(cfg);
      print_report("dfr test", run.test);
    } else if (command == "train-hsfm") {
      const auto run = cli::cmd_train_hsfm(cfg);
      print_report("erm test", run.erm.test);
      print_report("hsfm test", run.hsfm.test);
    } else if (command == "evaluate") {
      std::cout << cli::report_to_json(cli::cmd_evaluate(cfg)).dump(2) << "\n";
    } else if (command == "sweep") {
      std::cout << cli::sweep_csv(cfg.sweep.axis, cli::cmd_sweep(cfg));
    } else if (command == "check-grad") {
      const auto report = cli::cmd_check_grad(cfg);
      for (const auto& c : report.cases) {
        std::cout << (c.passed ? "PASS" : "FAIL") << " C=" << c.classes
                  << " d=" << c.dim << " s=" << c.support_size
                  << " |Q|=" << c.hard_size << " T=" << c.steps
                  << " alpha=" << c.alpha << " max_rel_err=" << c.max_rel_error
                  << " unfloored=" << c.unfloored_rel_error
                  << "\n";
      }
      std::cout << (report.zero_unroll_exact ? "PASS" : "FAIL")
                << " T=0 meta-gradient is exactly zero\n";
      if (!report.passed) {
        spdlog::error("meta-gradient check FAILED (max relative error {})",
                      report.max_rel_error);
        return kExitRuntime;
      }
      std::cout << "meta-gradient check passed\n";
    }
  } catch (const hsfm::ValidationError& e) {
    spdlog::error("{}", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}
