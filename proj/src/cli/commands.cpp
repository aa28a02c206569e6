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

#include "hsfm/cli/commands.hpp"

#include <atomic>
#include <cstdio>
#include <mutex>
#include <sstream>
#include <thread>

#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "hsfm/errors.hpp"
#include "hsfm/synthgen.hpp"

namespace hsfm::cli {

using nlohmann::json;

namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
  const std::span<const std::uint8_t> bytes(
      reinterpret_cast<const std::uint8_t*>(text.data()), text.size());
  io::write_file(path, bytes);
}

void write_json(const fs::path& path, const json& doc) {
  write_text(path, doc.dump(2) + "\n");
}

void write_resolved_config(const RunConfig& cfg, const fs::path& out) {
  write_json(out / "config.json", to_json(cfg));
}

namespace {

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(),
                 nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < length; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xf]);
  }
  return hex;
}

std::string sha256_file(const fs::path& path) {
  return sha256_hex(io::read_file(path));
}

DatasetSplit load_data(const RunConfig& cfg) {
  if (cfg.data.synth) return generate(*cfg.data.synth);
  if (cfg.data.files) {
    DatasetSplit split{read_features(cfg.data.files->train),
                       read_features(cfg.data.files->val),
                       read_features(cfg.data.files->test)};
    split.validate();
    return split;
  }
  throw ValidationError("config.data: no data source given");
}

LinearHead obtain_erm_head(const RunConfig& cfg, const DatasetSplit& split) {
  if (cfg.erm_checkpoint) {
    LinearHead head = load_head(*cfg.erm_checkpoint);
    if (head.class_count() != split.train.class_count() ||
        head.dim() != split.train.dim()) {
      throw ShapeError("ERM checkpoint shape does not match the dataset");
    }
    return head;
  }
  return erm_train(LinearHead::zeros(split.train.class_count(), split.train.dim()),
                   split.train, cfg.erm);
}

json report_to_json(const EvalReport& report) {
  json groups = json::array();
  for (std::size_t g = 0; g < report.per_group_counts.size(); ++g) {
    const auto& acc = report.per_group_accuracy[g];
    groups.push_back({{"group", g},
                      {"count", report.per_group_counts[g]},
                      {"correct", report.per_group_correct[g]},
                      {"accuracy", acc ? json(*acc) : json(nullptr)}});
  }
  return {{"worst_group_accuracy", report.worst_group_accuracy},
          {"average_accuracy", report.average_accuracy},
          {"mean_loss", report.mean_loss},
          {"per_group", groups}};
}

json record_to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"hard_set_size", r.hard_set_size},
          {"hard_loss_before", r.hard_loss_before},
          {"hard_loss_after", r.hard_loss_after},
          {"outer_loss_first", r.outer_loss_first},
          {"outer_loss_last", r.outer_loss_last},
          {"val_worst_group_accuracy", r.val_worst_group_accuracy},
          {"val_average_accuracy", r.val_average_accuracy},
          {"mean_delta_h", r.mean_delta_h}};
}

json hard_set_to_json(const HardSet& hard) {
  return {{"source_rows", hard.source_rows},
          {"labels", hard.labels},
          {"losses", hard.losses_at_selection}};
}

json cmd_gen_data(const RunConfig& cfg) {
  if (!cfg.data.synth) {
    throw ValidationError("gen-data needs a synthetic data source (config.data.synth)");
  }
  const DatasetSplit split = generate(*cfg.data.synth);
  make_dir(cfg.out);
  json files = json::object();
  const std::pair<const char*, const FeatureDataset*> parts[] = {
      {"train", &split.train}, {"val", &split.val}, {"test", &split.test}};
  for (const auto& [name, ds] : parts) {
    const auto bytes = encode_features(*ds);
    const fs::path path = cfg.out / (std::string(name) + ".hsfm");
    io::write_file(path, bytes);
    files[name] = {{"path", path.filename().string()},
                   {"n", ds->size()},
                   {"group_sizes", group_sizes(*ds)},
                   {"sha256", sha256_hex(bytes)}};
  }
  json manifest = {{"format", "HSFM-FS"},
                   {"version", kFeatureFormatVersion},
                   {"synth", to_json(*cfg.data.synth)},
                   {"files", files}};
  write_json(cfg.out / "manifest.json", manifest);
  write_resolved_config(cfg, cfg.out);
  return manifest;
}

HeadRun cmd_train_erm(const RunConfig& cfg) {
  const DatasetSplit split = load_data(cfg);
  HeadRun run;
  run.head = erm_train(LinearHead::zeros(split.train.class_count(), split.train.dim()),
                       split.train, cfg.erm);
  run.val = evaluate(run.head, split.val);
  run.test = evaluate(run.head, split.test);
  make_dir(cfg.out);
  save_head(cfg.out / "erm_head.hsfh", run.head);
  write_json(cfg.out / "erm_report.json",
             {{"val", report_to_json(run.val)}, {"test", report_to_json(run.test)}});
  write_resolved_config(cfg, cfg.out);
  return run;
}

HeadRun cmd_train_dfr(const RunConfig& cfg) {
  const DatasetSplit split = load_data(cfg);
  const LinearHead erm = obtain_erm_head(cfg, split);
  HeadRun run;
  run.head = dfr_baseline(erm, split.val, cfg.dfr.erm, cfg.dfr.balance, cfg.seed);
  run.val = evaluate(run.head, split.val);
  run.test = evaluate(run.head, split.test);
  make_dir(cfg.out);
  save_head(cfg.out / "dfr_head.hsfh", run.head);
  write_json(cfg.out / "dfr_report.json",
             {{"balance", to_string(cfg.dfr.balance)},
              {"val", report_to_json(run.val)},
              {"test", report_to_json(run.test)}});
  write_resolved_config(cfg, cfg.out);
  return run;
}

namespace {

json displacement_summary(const SupportSet& support) {
  std::vector<double> sum(support.class_count, 0.0);
  std::vector<std::size_t> count(support.class_count, 0);
  double total = 0.0;
  for (std::size_t i = 0; i < support.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double dist =
        (support.embeddings.row(r) - support.initial_embeddings.row(r)).norm();
    sum[support.labels[i]] += dist;
    ++count[support.labels[i]];
    total += dist;
  }
  json per_class = json::array();
  for (std::size_t c = 0; c < sum.size(); ++c) {
    per_class.push_back(count[c] ? sum[c] / static_cast<double>(count[c]) : 0.0);
  }
  return {{"mean_row_displacement",
           support.size() ? total / static_cast<double>(support.size()) : 0.0},
          {"per_class_mean_displacement", per_class}};
}

}  // namespace

HsfmRun run_hsfm_into(const RunConfig& cfg, const DatasetSplit& split,
                      const HeadRun& erm, const fs::path& out) {
  make_dir(out);
  HsfmRun run;
  run.erm = erm;
  std::ostringstream trace;
  run.detail = hsfm_train(erm.head, split, cfg.hsfm, [&](const EpochRecord& r) {
    trace << record_to_json(r).dump() << "\n";
  });
  run.hsfm.head = run.detail.head;
  run.hsfm.val = evaluate(run.hsfm.head, split.val);
  run.hsfm.test = evaluate(run.hsfm.head, split.test);

  save_head(out / "erm_head.hsfh", erm.head);
  save_head(out / "hsfm_head.hsfh", run.hsfm.head);
  export_support(run.detail.support, out / "support");
  write_text(out / "trace.jsonl", trace.str());
  write_json(out / "hardset.json", hard_set_to_json(run.detail.last_hard_set));
  write_json(out / "summary.json",
             {{"hsfm_config", to_json(cfg.hsfm)},
              {"seed", cfg.hsfm.seed},
              {"support_size", run.detail.support.size()},
              {"support", displacement_summary(run.detail.support)},
              {"erm", {{"val", report_to_json(erm.val)}, {"test", report_to_json(erm.test)}}},
              {"hsfm",
               {{"val", report_to_json(run.hsfm.val)},
                {"test", report_to_json(run.hsfm.test)}}}});
  RunConfig echoed = cfg;
  echoed.out = out;
  write_resolved_config(echoed, out);
  return run;
}

HsfmRun cmd_train_hsfm(const RunConfig& cfg) {
  validate(cfg);
  const DatasetSplit split = load_data(cfg);
  HeadRun erm;
  erm.head = obtain_erm_head(cfg, split);
  erm.val = evaluate(erm.head, split.val);
  erm.test = evaluate(erm.head, split.test);
  return run_hsfm_into(cfg, split, erm, cfg.out);
}

std::string sweep_csv(SweepAxis axis, const std::vector<SweepPoint>& points) {
  std::string csv = "axis,value,worst_group_accuracy,average_accuracy,status\n";
  char line[256];
  for (const auto& p : points) {
    if (p.ok) {
      std::snprintf(line, sizeof(line), "%s,%zu,%.6f,%.6f,ok\n",
                    to_string(axis).c_str(), p.value, p.worst_group_accuracy,
                    p.average_accuracy);
    } else {
      std::snprintf(line, sizeof(line), "%s,%zu,,,failed\n",
                    to_string(axis).c_str(), p.value);
    }
    csv += line;
  }
  return csv;
}

std::vector<SweepPoint> cmd_sweep(const RunConfig& cfg) {
  if (cfg.sweep.values.empty()) throw ValidationError("config.sweep.values is empty");
  validate(cfg);
  const DatasetSplit split = load_data(cfg);
  HeadRun erm;
  erm.head = obtain_erm_head(cfg, split);
  erm.val = evaluate(erm.head, split.val);
  erm.test = evaluate(erm.head, split.test);
  make_dir(cfg.out);

  std::vector<SweepPoint> points(cfg.sweep.values.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < points.size(); i = next++) {
      SweepPoint& point = points[i];
      point.value = cfg.sweep.values[i];
      RunConfig local = cfg;
      if (cfg.sweep.axis == SweepAxis::inner_steps) {
        local.hsfm.inner_steps = point.value;
      } else {
        local.hsfm.support_per_class = point.value;
      }
      if (!cfg.sweep.shared_seed) {
        local.seed = cfg.seed + i;
        local.hsfm.seed = local.seed;
      }
      const fs::path dir =
          cfg.out / (to_string(cfg.sweep.axis) + "_" + std::to_string(point.value));
      try {
        const HsfmRun run = run_hsfm_into(local, split, erm, dir);
        point.ok = true;
        point.worst_group_accuracy = run.hsfm.test.worst_group_accuracy;
        point.average_accuracy = run.hsfm.test.average_accuracy;
      } catch (const std::exception& e) {
        point.error = e.what();
        spdlog::error("sweep point {}={} failed: {}", to_string(cfg.sweep.axis),
                      point.value, e.what());
      }
    }
  };
  const std::size_t threads = std::min(cfg.threads, points.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  write_text(cfg.out / "sweep.csv", sweep_csv(cfg.sweep.axis, points));
  write_resolved_config(cfg, cfg.out);
  return points;
}

GradCheckReport cmd_check_grad(const RunConfig& cfg) {
  const GradCheckReport report = run_gradient_check(cfg.check_grad);
  make_dir(cfg.out);
  write_json(cfg.out / "check_grad.json", grad_report_to_json(report));
  return report;
}

EvalReport cmd_evaluate(const RunConfig& cfg) {
  if (cfg.evaluate.head.empty() || cfg.evaluate.data.empty()) {
    throw ValidationError("evaluate needs config.evaluate.head and config.evaluate.data");
  }
  const LinearHead head = load_head(cfg.evaluate.head);
  const FeatureDataset data = read_features(cfg.evaluate.data);
  if (head.dim() != data.dim()) {
    throw ShapeError("head dim " + std::to_string(head.dim()) +
                     " does not match data dim " + std::to_string(data.dim()));
  }
  const EvalReport report = evaluate(head, data);
  make_dir(cfg.out);
  write_json(cfg.out / "report.json", report_to_json(report));
  return report;
}

}  // namespace hsfm::cli
