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

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "hsfm/cli/commands.hpp"
#include "hsfm/cli/config.hpp"
#include "hsfm/errors.hpp"
#include "test_util.hpp"

namespace hsfm::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

RunConfig quick_config(const fs::path& out, std::size_t epochs = 3) {
  json doc = {{"out", out.string()}, {"hsfm", {{"epochs", epochs}}}};
  return parse_config(doc);
}

std::map<std::string, std::string> hashes_of(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) {
      out[entry.path().filename().string()] = sha256_file(entry.path());
    }
  }
  return out;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_binary(const std::string& args) {
  const std::string cmd = std::string(HSFM_BINARY) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Sha256Test, KnownDigest) {
  const std::string abc = "abc";
  EXPECT_EQ(sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(abc.data()), 3)),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(ConfigTest, DefaultsAreTheSyntheticPreset) {
  const RunConfig cfg = parse_config(json::object());
  ASSERT_TRUE(cfg.data.synth.has_value());
  EXPECT_EQ(*cfg.data.synth, synth_waterbirds());
  EXPECT_EQ(cfg.hsfm, *find_preset(kSynthPreset));
  EXPECT_EQ(cfg.erm.steps, 500u);
  EXPECT_DOUBLE_EQ(cfg.erm.lr, 0.1);
}

TEST(ConfigTest, WaterbirdsResnetPreset) {
  const RunConfig cfg = parse_config({{"preset", "waterbirds-resnet"}});
  EXPECT_EQ(cfg.hsfm.support_per_class, 16u);
  EXPECT_EQ(cfg.hsfm.inner_steps, 15u);
  EXPECT_DOUBLE_EQ(cfg.hsfm.inner_lr, 5e-5);
  EXPECT_DOUBLE_EQ(cfg.hsfm.outer_lr, 1.0);
  EXPECT_EQ(cfg.hsfm.meta_steps, 15u);
  EXPECT_EQ(cfg.hsfm.k_hard, 64u);
  EXPECT_EQ(cfg.hsfm.epochs, 40u);
}

TEST(ConfigTest, PresetTable) {
  const auto celeba = *find_preset("celeba-resnet");
  EXPECT_EQ(celeba.support_per_class, 1024u);
  EXPECT_DOUBLE_EQ(celeba.outer_lr, 0.1);
  EXPECT_EQ(celeba.k_hard, 256u);
  const auto metashift = *find_preset("metashift-vit");
  EXPECT_DOUBLE_EQ(metashift.inner_lr, 1e-5);
  EXPECT_EQ(metashift.k_hard, 8u);
  EXPECT_EQ(metashift.epochs, 30u);
  const auto fine = *find_preset("fine-grained-resnet");
  EXPECT_EQ(fine.clip_norm, 10.0);
  EXPECT_EQ(fine.outer_optimizer, OuterOptimizerKind::adaptive);
  for (const auto& name : preset_names()) {
    EXPECT_NO_THROW(find_preset(name)->validate()) << name;
  }
  EXPECT_FALSE(find_preset("imagenet-resnet").has_value());
}

TEST(ConfigTest, ResolutionOrder) {
  const json doc = {{"preset", "waterbirds-resnet"}, {"hsfm", {{"K_hard", 7}}}, {"seed", 3}};
  const RunConfig a = parse_config(doc);
  EXPECT_EQ(a.hsfm.k_hard, 7u);
  EXPECT_EQ(a.hsfm.inner_steps, 15u);
  EXPECT_EQ(a.hsfm.seed, 3u);

  Overrides ov;
  ov.preset = "celeba-resnet";
  ov.seed = 9;
  ov.out = "elsewhere";
  const RunConfig b = parse_config(doc, ov);
  EXPECT_EQ(b.hsfm.support_per_class, 1024u);
  EXPECT_EQ(b.hsfm.k_hard, 7u);
  EXPECT_EQ(b.seed, 9u);
  EXPECT_EQ(b.hsfm.seed, 9u);
  EXPECT_EQ(b.out, fs::path("elsewhere"));
}

TEST(ConfigTest, RejectsBadDocuments) {
  EXPECT_THROW(parse_config({{"hsfm", {{"Tee", 3}}}}), ValidationError);
  EXPECT_THROW(parse_config({{"learning_rate", 3}}), ValidationError);
  EXPECT_THROW(parse_config({{"hsfm", {{"T", "ten"}}}}), ValidationError);
  EXPECT_THROW(parse_config({{"hsfm", {{"T", -1}}}}), ValidationError);
  EXPECT_THROW(parse_config({{"preset", "nope"}}), ValidationError);
  EXPECT_THROW(parse_config({{"sweep", {{"axis", "epochs"}}}}), ValidationError);
  EXPECT_THROW(parse_config({{"data", {{"synth", "synth-waterbirds"},
                                       {"files", {{"train", "a"}, {"val", "b"}, {"test", "c"}}}}}}),
               ValidationError);
  EXPECT_THROW(
      parse_config({{"data", {{"synth", {{"train_counts", json::array({json::array({0, 0}),
                                                                        json::array({0, 0})})}}}}}}),
      ValidationError);
}

TEST(ConfigTest, RoundTripThroughJson) {
  const json doc = {{"preset", "fine-grained-resnet"},
                    {"hsfm", {{"epochs", 2}}},
                    {"dfr", {{"balance", "by-class"}}},
                    {"sweep", {{"axis", "support_per_class"}, {"values", {2, 4}}}},
                    {"seed", 5}};
  const RunConfig cfg = parse_config(doc);
  const RunConfig again = parse_config(to_json(cfg));
  EXPECT_EQ(to_json(again), to_json(cfg));
  EXPECT_EQ(again.hsfm, cfg.hsfm);
  EXPECT_EQ(again.dfr.balance, DfrBalance::by_class);
  EXPECT_EQ(again.sweep.values, (std::vector<std::size_t>{2, 4}));
}

TEST(ConfigTest, RelativePathsResolveAgainstConfigFile) {
  const auto dir = testing::scratch_dir("cfgpaths");
  fs::create_directories(dir / "data");
  write_json(dir / "c.json", {{"data", {{"files", {{"train", "data/train.hsfm"},
                                                   {"val", "data/val.hsfm"},
                                                   {"test", "data/test.hsfm"}}}}}});
  const RunConfig cfg = load_config(dir / "c.json");
  ASSERT_TRUE(cfg.data.files.has_value());
  EXPECT_EQ(cfg.data.files->train, dir / "data" / "train.hsfm");
  EXPECT_THROW(validate(cfg), ValidationError);
}

TEST(ConfigTest, ShippedConfigsParse) {
  std::size_t count = 0;
  for (const auto& entry : fs::directory_iterator(HSFM_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    EXPECT_NO_THROW(load_config(entry.path())) << entry.path();
    ++count;
  }
  EXPECT_GE(count, 1u);
}

TEST(GenDataTest, CanonicalSizesAndStableHashes) {
  const auto dir = testing::scratch_dir("gendata");
  const json first = cmd_gen_data(quick_config(dir / "a"));
  const json second = cmd_gen_data(quick_config(dir / "b"));
  EXPECT_EQ(first["files"]["train"]["n"], 2100);
  EXPECT_EQ(first["files"]["val"]["n"], 800);
  EXPECT_EQ(first["files"]["test"]["n"], 800);
  for (const char* part : {"train", "val", "test"}) {
    EXPECT_EQ(first["files"][part]["sha256"], second["files"][part]["sha256"]);
    EXPECT_EQ(first["files"][part]["sha256"].get<std::string>(),
              sha256_file(dir / "a" / (std::string(part) + ".hsfm")));
  }
  const FeatureDataset train = read_features(dir / "a" / "train.hsfm");
  EXPECT_EQ(train, generate(synth_waterbirds()).train);
  EXPECT_EQ(json::parse(read_text(dir / "a" / "manifest.json")), first);
}

TEST(TrainErmTest, ReportIsConsistent) {
  const auto dir = testing::scratch_dir("erm");
  const HeadRun run = cmd_train_erm(quick_config(dir));
  const json report = json::parse(read_text(dir / "erm_report.json"));
  std::size_t total = 0;
  for (auto c : run.test.per_group_counts) total += c;
  EXPECT_EQ(total, 800u);
  EXPECT_LT(run.test.worst_group_accuracy, bayes_core_accuracy(synth_waterbirds()) - 0.10);
  EXPECT_EQ(load_head(dir / "erm_head.hsfh").weights,
            run.head.weights.cast<float>().cast<double>());
  EXPECT_TRUE(report.contains("test"));
}

TEST(TrainErmTest, ZeroRateIsChance) {
  const auto dir = testing::scratch_dir("erm0");
  RunConfig cfg = quick_config(dir);
  cfg.erm.lr = 0.0;
  const HeadRun run = cmd_train_erm(cfg);
  EXPECT_DOUBLE_EQ(run.test.average_accuracy, 0.5);
}

TEST(EvaluateTest, FilesEndToEnd) {
  const auto dir = testing::scratch_dir("evaluate");
  cmd_gen_data(quick_config(dir / "data"));
  const json doc = {{"out", (dir / "erm").string()},
                    {"data", {{"files", {{"train", (dir / "data" / "train.hsfm").string()},
                                         {"val", (dir / "data" / "val.hsfm").string()},
                                         {"test", (dir / "data" / "test.hsfm").string()}}}}}};
  const HeadRun erm = cmd_train_erm(parse_config(doc));

  RunConfig ev = quick_config(dir / "eval");
  ev.evaluate.head = dir / "erm" / "erm_head.hsfh";
  ev.evaluate.data = dir / "data" / "test.hsfm";
  const EvalReport report = cmd_evaluate(ev);
  // The checkpoint stores f32 weights, so compare the predictions it implies.
  const EvalReport expected =
      evaluate(load_head(ev.evaluate.head), read_features(ev.evaluate.data));
  EXPECT_EQ(report.per_group_correct, expected.per_group_correct);
  EXPECT_NEAR(report.worst_group_accuracy, erm.test.worst_group_accuracy, 0.01);
  EXPECT_TRUE(fs::exists(dir / "eval" / "report.json"));
}

TEST(TrainHsfmTest, RerunsAreByteIdentical) {
  const auto dir = testing::scratch_dir("hsfm_repro");
  cmd_train_hsfm(quick_config(dir));
  const auto first = hashes_of(dir);
  cmd_train_hsfm(quick_config(dir));
  EXPECT_EQ(hashes_of(dir), first);
  for (const char* name : {"erm_head.hsfh", "hsfm_head.hsfh", "support.init", "support.opt",
                           "trace.jsonl", "hardset.json", "summary.json", "config.json"}) {
    EXPECT_TRUE(first.contains(name)) << name;
  }
}

TEST(TrainHsfmTest, ResumesFromErmCheckpoint) {
  const auto dir = testing::scratch_dir("hsfm_resume");
  cmd_train_hsfm(quick_config(dir / "a"));
  RunConfig cfg = quick_config(dir / "b");
  cfg.erm_checkpoint = dir / "a" / "erm_head.hsfh";
  cmd_train_hsfm(cfg);
  cmd_train_hsfm(cfg);
  const auto b1 = hashes_of(dir / "b");
  cmd_train_hsfm(cfg);
  EXPECT_EQ(hashes_of(dir / "b"), b1);
  EXPECT_EQ(b1.at("erm_head.hsfh"), sha256_file(dir / "a" / "erm_head.hsfh"));
}

TEST(TrainHsfmTest, ResolvedConfigReproducesTheRun) {
  const auto dir = testing::scratch_dir("hsfm_echo");
  const HsfmRun first = cmd_train_hsfm(quick_config(dir / "a", 2));
  RunConfig echoed = load_config(dir / "a" / "config.json");
  echoed.out = dir / "b";
  const HsfmRun second = cmd_train_hsfm(echoed);
  EXPECT_EQ(first.hsfm.head, second.hsfm.head);
  EXPECT_EQ(sha256_file(dir / "a" / "hsfm_head.hsfh"), sha256_file(dir / "b" / "hsfm_head.hsfh"));
}

TEST(SweepTest, SingleValueMatchesTrainHsfm) {
  const auto dir = testing::scratch_dir("sweep1");
  RunConfig cfg = quick_config(dir / "sweep");
  cfg.sweep.axis = SweepAxis::inner_steps;
  cfg.sweep.values = {cfg.hsfm.inner_steps};
  const auto points = cmd_sweep(cfg);
  ASSERT_EQ(points.size(), 1u);
  ASSERT_TRUE(points[0].ok);

  const HsfmRun direct = cmd_train_hsfm(quick_config(dir / "direct"));
  EXPECT_EQ(points[0].worst_group_accuracy, direct.hsfm.test.worst_group_accuracy);
  EXPECT_EQ(points[0].average_accuracy, direct.hsfm.test.average_accuracy);
  const fs::path point_dir = dir / "sweep" / ("T_" + std::to_string(cfg.hsfm.inner_steps));
  for (const char* name : {"hsfm_head.hsfh", "support.opt", "trace.jsonl", "summary.json"}) {
    EXPECT_EQ(sha256_file(point_dir / name), sha256_file(dir / "direct" / name)) << name;
  }
  const std::string csv = read_text(dir / "sweep" / "sweep.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "axis,value,worst_group_accuracy,average_accuracy,status");
}

TEST(SweepTest, FailedPointIsMarkedAndSweepContinues) {
  const auto dir = testing::scratch_dir("sweep_fail");
  RunConfig cfg = quick_config(dir, 1);
  cfg.sweep.axis = SweepAxis::inner_steps;
  cfg.sweep.values = {0, 2};
  cfg.threads = 2;
  const auto points = cmd_sweep(cfg);
  ASSERT_EQ(points.size(), 2u);
  EXPECT_FALSE(points[0].ok);
  EXPECT_TRUE(points[1].ok);
  const std::string csv = read_text(dir / "sweep.csv");
  EXPECT_NE(csv.find("failed"), std::string::npos) << csv;
}

TEST(SweepTest, CsvFormat) {
  std::vector<SweepPoint> points(2);
  points[0] = {5, true, 0.97, 0.985, ""};
  points[1] = {7, false, 0.0, 0.0, "boom"};
  EXPECT_EQ(sweep_csv(SweepAxis::support_per_class, points),
            "axis,value,worst_group_accuracy,average_accuracy,status\n"
            "support_per_class,5,0.970000,0.985000,ok\n"
            "support_per_class,7,,,failed\n");
}

TEST(CheckGradTest, DefaultSuitePassesAndMutationFails) {
  const auto dir = testing::scratch_dir("checkgrad");
  RunConfig cfg = quick_config(dir);
  const GradCheckReport ok = cmd_check_grad(cfg);
  EXPECT_TRUE(ok.passed);
  EXPECT_TRUE(ok.zero_unroll_exact);
  EXPECT_EQ(ok.cases.size(), 24u);
  EXPECT_TRUE(json::parse(read_text(dir / "check_grad.json"))["passed"].get<bool>());

  cfg.check_grad.mutate_sign_flip = true;
  const GradCheckReport bad = cmd_check_grad(cfg);
  EXPECT_FALSE(bad.passed);
  EXPECT_TRUE(bad.zero_unroll_exact);
}

TEST(BinaryTest, ExitCodes) {
  const auto dir = testing::scratch_dir("binary");
  write_json(dir / "ok.json", {{"out", (dir / "out").string()}});
  write_json(dir / "unknown.json", {{"bogus", 1}});
  write_json(dir / "mutant.json",
             {{"out", (dir / "out").string()}, {"check_grad", {{"mutate", "hessian-sign-flip"}}}});
  write_json(dir / "diverge.json",
             {{"out", (dir / "out").string()}, {"erm", {{"lr", 1e300}, {"steps", 5}}}});
  (std::ofstream(dir / "broken.json") << "{ not json");

  const std::string d = dir.string();
  EXPECT_EQ(run_binary("check-grad --config " + d + "/ok.json"), 0);
  EXPECT_EQ(run_binary("check-grad --config " + d + "/unknown.json"), 1);
  EXPECT_EQ(run_binary("check-grad --config " + d + "/broken.json"), 1);
  EXPECT_EQ(run_binary("check-grad --config " + d + "/mutant.json"), 2);
  EXPECT_EQ(run_binary("gen-data --config " + d + "/ok.json --preset nope"), 1);
  EXPECT_EQ(run_binary("gen-data --config " + d + "/ok.json --seed 3"), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "train.hsfm"));
}

}  // namespace
}  // namespace hsfm::cli
