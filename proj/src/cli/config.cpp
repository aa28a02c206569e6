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

#include "hsfm/cli/config.hpp"

#include <fstream>
#include <set>

#include "hsfm/errors.hpp"

namespace hsfm::cli {

using nlohmann::json;

namespace {

// Typed view over a JSON object that rejects keys nobody asked for.
class Obj {
 public:
  Obj(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ValidationError(where_ + ": expected a JSON object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    out = convert<T>(j_.at(key), path(key));
  }

  void read_optional_positive(const std::string& key, std::optional<double>& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (v.is_null()) {
      out.reset();
      return;
    }
    const double x = convert<double>(v, path(key));
    if (!(x > 0.0)) throw ValidationError(path(key) + ": must be > 0 or null");
    out = x;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ValidationError(where_ + ": unknown key '" + key + "'");
    }
  }

  template <typename T>
  static T convert(const json& v, const std::string& where) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ValidationError(where + ": expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ValidationError(where + ": expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ValidationError(where + ": expected a number");
      return v.get<T>();
    } else {
      static_assert(std::is_unsigned_v<T>);
      if (!v.is_number_unsigned() &&
          !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        throw ValidationError(where + ": expected a non-negative integer");
      }
      const auto x = v.get<std::uint64_t>();
      if (x > std::numeric_limits<T>::max()) {
        throw ValidationError(where + ": value out of range");
      }
      return static_cast<T>(x);
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

GroupCounts parse_counts(const json& v, const std::string& where) {
  if (!v.is_array()) throw ValidationError(where + ": expected a matrix of counts");
  GroupCounts counts;
  for (const auto& row : v) {
    if (!row.is_array()) throw ValidationError(where + ": expected rows of counts");
    std::vector<std::size_t> r;
    for (const auto& c : row) r.push_back(Obj::convert<std::size_t>(c, where));
    counts.push_back(std::move(r));
  }
  return counts;
}

std::filesystem::path resolve(const std::filesystem::path& p,
                              const std::filesystem::path& base) {
  if (p.empty() || p.is_absolute()) return p;
  return std::filesystem::absolute(base / p).lexically_normal();
}

std::filesystem::path read_path(Obj& o, const std::string& key,
                                const std::filesystem::path& base) {
  std::string s;
  o.read(key, s);
  if (s.empty()) throw ValidationError(o.path(key) + ": expected a non-empty path");
  return resolve(s, base);
}

void parse_erm(Obj& o, ErmOptions& erm) {
  o.read("steps", erm.steps);
  o.read("lr", erm.lr);
  o.read_optional_positive("clip_norm", erm.clip_norm);
  o.read("weight_decay", erm.weight_decay);
  if (!(erm.lr >= 0.0)) throw ValidationError(o.path("lr") + ": must be >= 0");
  if (!(erm.weight_decay >= 0.0)) {
    throw ValidationError(o.path("weight_decay") + ": must be >= 0");
  }
}

void parse_hsfm_fields(Obj& o, HsfmConfig& h) {
  o.read("support_per_class", h.support_per_class);
  o.read("T", h.inner_steps);
  o.read("inner_lr", h.inner_lr);
  o.read("outer_lr", h.outer_lr);
  o.read("K_H", h.meta_steps);
  o.read("K_hard", h.k_hard);
  o.read("epochs", h.epochs);
  o.read_optional_positive("clip_norm", h.clip_norm);
  if (o.has("outer_optimizer")) {
    h.outer_optimizer = outer_optimizer_from_string(
        Obj::convert<std::string>(o.raw("outer_optimizer"), o.path("outer_optimizer")));
  }
  o.read("first_order", h.first_order);
}

json optional_to_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

json erm_to_json(const ErmOptions& e) {
  return {{"steps", e.steps},
          {"lr", e.lr},
          {"clip_norm", optional_to_json(e.clip_norm)},
          {"weight_decay", e.weight_decay}};
}

}  // namespace

std::string to_string(SweepAxis axis) {
  return axis == SweepAxis::inner_steps ? "T" : "support_per_class";
}

SynthConfig parse_synth(const json& doc) {
  if (doc.is_string()) {
    if (doc.get<std::string>() != kSynthPreset) {
      throw ValidationError("data.synth: unknown synthetic preset '" +
                            doc.get<std::string>() + "'");
    }
    return synth_waterbirds();
  }
  Obj o(doc, "data.synth");
  SynthConfig cfg;
  if (o.has("base")) {
    const auto base = Obj::convert<std::string>(o.raw("base"), o.path("base"));
    if (base != kSynthPreset) {
      throw ValidationError("data.synth.base: unknown synthetic preset '" + base + "'");
    }
    cfg = synth_waterbirds();
  }
  o.read("class_count", cfg.class_count);
  o.read("env_count", cfg.env_count);
  o.read("d_core", cfg.d_core);
  o.read("d_spur", cfg.d_spur);
  o.read("d_noise", cfg.d_noise);
  o.read("mu_core", cfg.mu_core);
  o.read("mu_spur", cfg.mu_spur);
  o.read("sigma", cfg.sigma);
  if (o.has("train_group_counts")) {
    cfg.train_group_counts = parse_counts(o.raw("train_group_counts"),
                                          o.path("train_group_counts"));
  }
  if (o.has("val_group_counts")) {
    cfg.val_group_counts = parse_counts(o.raw("val_group_counts"),
                                        o.path("val_group_counts"));
  }
  if (o.has("test_group_counts")) {
    cfg.test_group_counts = parse_counts(o.raw("test_group_counts"),
                                         o.path("test_group_counts"));
  }
  o.read("seed", cfg.seed);
  o.finish();
  cfg.validate();
  return cfg;
}

namespace {

RunConfig parse_with_base(const json& doc, const Overrides& overrides,
                          const std::filesystem::path& base) {
  Obj root(doc, "config");
  RunConfig cfg;
  cfg.data.synth = synth_waterbirds();

  std::optional<std::string> preset;
  if (root.has("preset")) {
    preset = Obj::convert<std::string>(root.raw("preset"), "config.preset");
  }
  if (overrides.preset) preset = overrides.preset;
  cfg.hsfm = *find_preset(kSynthPreset);
  if (preset) {
    const auto found = find_preset(*preset);
    if (!found) throw ValidationError("unknown preset '" + *preset + "'");
    cfg.hsfm = *found;
  }

  if (root.has("data")) {
    Obj data(root.raw("data"), "config.data");
    cfg.data = DataSource{};
    if (data.has("synth")) cfg.data.synth = parse_synth(data.raw("synth"));
    if (data.has("files")) {
      Obj files(data.raw("files"), "config.data.files");
      cfg.data.files = DataFiles{read_path(files, "train", base),
                                 read_path(files, "val", base),
                                 read_path(files, "test", base)};
      files.finish();
    }
    data.finish();
    if (cfg.data.synth.has_value() == cfg.data.files.has_value()) {
      throw ValidationError("config.data: give exactly one of 'synth' or 'files'");
    }
  }

  if (root.has("erm")) {
    Obj erm(root.raw("erm"), "config.erm");
    parse_erm(erm, cfg.erm);
    erm.finish();
  }
  if (root.has("hsfm")) {
    Obj h(root.raw("hsfm"), "config.hsfm");
    parse_hsfm_fields(h, cfg.hsfm);
    h.finish();
  }
  if (root.has("dfr")) {
    Obj dfr(root.raw("dfr"), "config.dfr");
    parse_erm(dfr, cfg.dfr.erm);
    if (dfr.has("balance")) {
      cfg.dfr.balance = dfr_balance_from_string(
          Obj::convert<std::string>(dfr.raw("balance"), "config.dfr.balance"));
    }
    dfr.finish();
  }
  if (root.has("erm_checkpoint")) {
    const json& v = root.raw("erm_checkpoint");
    if (!v.is_null()) cfg.erm_checkpoint = read_path(root, "erm_checkpoint", base);
  }
  if (root.has("sweep")) {
    Obj s(root.raw("sweep"), "config.sweep");
    if (s.has("axis")) {
      const auto axis = Obj::convert<std::string>(s.raw("axis"), "config.sweep.axis");
      if (axis == "T") {
        cfg.sweep.axis = SweepAxis::inner_steps;
      } else if (axis == "support_per_class") {
        cfg.sweep.axis = SweepAxis::support_per_class;
      } else {
        throw ValidationError("config.sweep.axis: expected 'T' or 'support_per_class'");
      }
    }
    if (s.has("values")) {
      const json& v = s.raw("values");
      if (!v.is_array()) throw ValidationError("config.sweep.values: expected an array");
      cfg.sweep.values.clear();
      for (const auto& x : v) {
        cfg.sweep.values.push_back(Obj::convert<std::size_t>(x, "config.sweep.values"));
      }
    }
    if (s.has("seed_policy")) {
      const auto policy =
          Obj::convert<std::string>(s.raw("seed_policy"), "config.sweep.seed_policy");
      if (policy != "shared" && policy != "offset") {
        throw ValidationError("config.sweep.seed_policy: expected 'shared' or 'offset'");
      }
      cfg.sweep.shared_seed = policy == "shared";
    }
    s.finish();
  }
  if (root.has("check_grad")) {
    Obj c(root.raw("check_grad"), "config.check_grad");
    c.read("instances", cfg.check_grad.instances);
    c.read("seed", cfg.check_grad.seed);
    c.read("eps", cfg.check_grad.eps);
    c.read("rel_tol", cfg.check_grad.rel_tol);
    c.read("abs_floor", cfg.check_grad.abs_floor);
    if (c.has("mutate")) {
      const auto m = Obj::convert<std::string>(c.raw("mutate"), "config.check_grad.mutate");
      if (m != "none" && m != "hessian-sign-flip") {
        throw ValidationError(
            "config.check_grad.mutate: expected 'none' or 'hessian-sign-flip'");
      }
      cfg.check_grad.mutate_sign_flip = m == "hessian-sign-flip";
    }
    c.finish();
    if (!(cfg.check_grad.eps > 0.0)) throw ValidationError("config.check_grad.eps must be > 0");
  }
  if (root.has("evaluate")) {
    Obj e(root.raw("evaluate"), "config.evaluate");
    cfg.evaluate.head = read_path(e, "head", base);
    cfg.evaluate.data = read_path(e, "data", base);
    e.finish();
  }
  if (root.has("out")) {
    cfg.out = Obj::convert<std::string>(root.raw("out"), "config.out");
  }
  root.read("seed", cfg.seed);
  root.read("threads", cfg.threads);
  root.finish();

  if (overrides.out) cfg.out = *overrides.out;
  if (overrides.seed) cfg.seed = *overrides.seed;
  if (overrides.threads) cfg.threads = *overrides.threads;
  if (cfg.threads < 1) throw ValidationError("threads must be >= 1");
  cfg.hsfm.seed = cfg.seed;
  cfg.hsfm.validate();
  return cfg;
}

}  // namespace

RunConfig parse_config(const json& doc, const Overrides& overrides) {
  return parse_with_base(doc, overrides, {});
}

RunConfig load_config(const std::filesystem::path& path,
                      const Overrides& overrides) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": invalid JSON: " + e.what());
  }
  return parse_with_base(doc, overrides, path.parent_path());
}

void validate(const RunConfig& cfg) {
  cfg.hsfm.validate();
  if (cfg.data.files) {
    for (const auto& p : {cfg.data.files->train, cfg.data.files->val, cfg.data.files->test}) {
      if (!std::filesystem::exists(p)) {
        throw ValidationError("data file does not exist: " + p.string());
      }
    }
  }
  if (cfg.erm_checkpoint && !std::filesystem::exists(*cfg.erm_checkpoint)) {
    throw ValidationError("ERM checkpoint does not exist: " + cfg.erm_checkpoint->string());
  }
}

json to_json(const SynthConfig& cfg) {
  return {{"class_count", cfg.class_count},
          {"env_count", cfg.env_count},
          {"d_core", cfg.d_core},
          {"d_spur", cfg.d_spur},
          {"d_noise", cfg.d_noise},
          {"mu_core", cfg.mu_core},
          {"mu_spur", cfg.mu_spur},
          {"sigma", cfg.sigma},
          {"train_group_counts", cfg.train_group_counts},
          {"val_group_counts", cfg.val_group_counts},
          {"test_group_counts", cfg.test_group_counts},
          {"seed", cfg.seed}};
}

json to_json(const HsfmConfig& cfg) {
  return {{"support_per_class", cfg.support_per_class},
          {"T", cfg.inner_steps},
          {"inner_lr", cfg.inner_lr},
          {"outer_lr", cfg.outer_lr},
          {"K_H", cfg.meta_steps},
          {"K_hard", cfg.k_hard},
          {"epochs", cfg.epochs},
          {"clip_norm", optional_to_json(cfg.clip_norm)},
          {"outer_optimizer", to_string(cfg.outer_optimizer)},
          {"first_order", cfg.first_order}};
}

json to_json(const RunConfig& cfg) {
  json doc;
  json data = json::object();
  if (cfg.data.synth) data["synth"] = to_json(*cfg.data.synth);
  if (cfg.data.files) {
    data["files"] = {{"train", cfg.data.files->train.string()},
                     {"val", cfg.data.files->val.string()},
                     {"test", cfg.data.files->test.string()}};
  }
  doc["data"] = data;
  doc["erm"] = erm_to_json(cfg.erm);
  doc["hsfm"] = to_json(cfg.hsfm);
  json dfr = erm_to_json(cfg.dfr.erm);
  dfr["balance"] = to_string(cfg.dfr.balance);
  doc["dfr"] = dfr;
  doc["erm_checkpoint"] =
      cfg.erm_checkpoint ? json(cfg.erm_checkpoint->string()) : json(nullptr);
  doc["sweep"] = {{"axis", to_string(cfg.sweep.axis)},
                  {"values", cfg.sweep.values},
                  {"seed_policy", cfg.sweep.shared_seed ? "shared" : "offset"}};
  doc["check_grad"] = {{"instances", cfg.check_grad.instances},
                       {"seed", cfg.check_grad.seed},
                       {"eps", cfg.check_grad.eps},
                       {"rel_tol", cfg.check_grad.rel_tol},
                       {"abs_floor", cfg.check_grad.abs_floor},
                       {"mutate", cfg.check_grad.mutate_sign_flip ? "hessian-sign-flip" : "none"}};
  if (!cfg.evaluate.head.empty() || !cfg.evaluate.data.empty()) {
    doc["evaluate"] = {{"head", cfg.evaluate.head.string()},
                       {"data", cfg.evaluate.data.string()}};
  }
  doc["out"] = cfg.out.string();
  doc["seed"] = cfg.seed;
  doc["threads"] = cfg.threads;
  return doc;
}

}  // namespace hsfm::cli
