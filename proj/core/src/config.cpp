// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "qdbench/config.hpp"

#include "qdbench/error.hpp"
#include "qdbench/fsutil.hpp"

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <set>

namespace qdbench {

void TrainingOverrides::apply_to(TrainConfig& c) const {
  if (learning_rate) c.learning_rate = *learning_rate;
  if (weight_decay) c.weight_decay = *weight_decay;
  if (scheduler) c.scheduler = *scheduler;
  if (max_epochs) c.max_epochs = *max_epochs;
  if (patience) c.patience = *patience;
  if (batch_size) c.batch_size = *batch_size;
  if (dropout) c.dropout = *dropout;
  if (min_delta) c.min_delta = *min_delta;
  if (time_budget_s) c.time_budget_s = *time_budget_s;
}

TrainConfig ExperimentConfig::train_config(Family family, double budget, NormalizationKind norm) const {
  TrainConfig c = default_train_config(family);
  training.apply_to(c);
  if (auto it = overrides.find(family); it != overrides.end()) it->second.apply_to(c);
  c.folds = folds;
  c.budget_fraction = budget;
  c.normalization = norm;
  c.seed = seed;
  return c;
}

namespace {

std::string join(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

class Checker {
 public:
  explicit Checker(std::vector<ConfigIssue>& errors) : errors_(errors) {}

  void error(std::string path, std::string message) { errors_.push_back({std::move(path), std::move(message)}); }

  bool is_map(const YAML::Node& n, const std::string& path) {
    if (n.IsMap()) return true;
    error(path, "expected a mapping");
    return false;
  }

  void only_keys(const YAML::Node& map, const std::string& path, std::initializer_list<std::string_view> allowed) {
    std::set<std::string> seen;
    for (const auto& kv : map) {
      const std::string key = kv.first.Scalar();
      if (!seen.insert(key).second) error(join(path, key), "duplicate key");
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
        std::string list;
        for (auto a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
        error(join(path, key), "unknown key (allowed: " + list + ")");
      }
    }
  }

  template <typename T>
  std::optional<T> scalar(const YAML::Node& n, const std::string& path, const char* what) {
    if (!n.IsScalar()) {
      error(path, std::string("expected ") + what);
      return std::nullopt;
    }
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      error(path, std::string("expected ") + what + ", got '" + n.Scalar() + "'");
      return std::nullopt;
    }
  }

  std::optional<double> number(const YAML::Node& n, const std::string& path) {
    auto v = scalar<double>(n, path, "a number");
    if (v && !std::isfinite(*v)) {
      error(path, "must be finite");
      return std::nullopt;
    }
    return v;
  }

  std::optional<int> integer(const YAML::Node& n, const std::string& path, int lo, int hi) {
    auto v = scalar<long long>(n, path, "an integer");
    if (!v) return std::nullopt;
    if (*v < lo || *v > hi) {
      error(path, fmt::format("must lie in [{}, {}], got {}", lo, hi, *v));
      return std::nullopt;
    }
    return static_cast<int>(*v);
  }

  std::vector<ConfigIssue>& errors_;
};

void read_overrides(Checker& ck, const YAML::Node& n, const std::string& path, TrainingOverrides& o) {
  if (!ck.is_map(n, path)) return;
  ck.only_keys(n, path,
               {"learning_rate", "weight_decay", "scheduler", "max_epochs", "patience", "batch_size", "dropout",
                "min_delta", "time_budget_s"});
  if (auto v = n["learning_rate"]) {
    if (auto x = ck.number(v, join(path, "learning_rate"))) {
      if (*x > 0) o.learning_rate = x;
      else ck.error(join(path, "learning_rate"), "must be > 0");
    }
  }
  if (auto v = n["weight_decay"]) {
    if (auto x = ck.number(v, join(path, "weight_decay"))) {
      if (*x >= 0) o.weight_decay = x;
      else ck.error(join(path, "weight_decay"), "must be >= 0");
    }
  }
  if (auto v = n["scheduler"]) {
    if (auto s = ck.scalar<std::string>(v, join(path, "scheduler"), "a string")) {
      if (auto sch = parse_scheduler(*s)) o.scheduler = sch;
      else ck.error(join(path, "scheduler"), "'" + *s + "' is not one of {constant, cosine}");
    }
  }
  if (auto v = n["max_epochs"]) o.max_epochs = ck.integer(v, join(path, "max_epochs"), 1, 100000);
  if (auto v = n["patience"]) o.patience = ck.integer(v, join(path, "patience"), 1, 100000);
  if (auto v = n["batch_size"]) {
    if (auto b = ck.integer(v, join(path, "batch_size"), 1, 1 << 20)) o.batch_size = static_cast<std::size_t>(*b);
  }
  if (auto v = n["dropout"]) {
    if (auto x = ck.number(v, join(path, "dropout"))) {
      if (*x >= 0 && *x < 1) o.dropout = x;
      else ck.error(join(path, "dropout"), "must lie in [0, 1)");
    }
  }
  if (auto v = n["min_delta"]) {
    if (auto x = ck.number(v, join(path, "min_delta"))) {
      if (*x >= 0) o.min_delta = x;
      else ck.error(join(path, "min_delta"), "must be >= 0");
    }
  }
  if (auto v = n["time_budget_s"]) {
    if (auto x = ck.number(v, join(path, "time_budget_s"))) {
      if (*x >= 0) o.time_budget_s = x;
      else ck.error(join(path, "time_budget_s"), "must be >= 0");
    }
  }
}

template <typename T, typename Parse>
std::vector<T> read_list(Checker& ck, const YAML::Node& n, const std::string& path, Parse parse) {
  std::vector<T> out;
  if (!n.IsSequence()) {
    ck.error(path, "expected a list");
    return out;
  }
  if (n.size() == 0) ck.error(path, "must not be empty");
  for (std::size_t i = 0; i < n.size(); ++i) {
    const std::string p = fmt::format("{}[{}]", path, i);
    if (auto v = parse(n[i], p)) {
      if (std::find(out.begin(), out.end(), *v) != out.end()) ck.error(p, "duplicate entry");
      else out.push_back(*v);
    }
  }
  return out;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
  return p.is_absolute() || base.empty() ? p : base / p;
}

}  // namespace

ConfigResult validate_config(std::string_view yaml_text, const std::filesystem::path& base_dir) {
  ConfigResult result;
  Checker ck(result.errors);
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml_text));
  } catch (const YAML::Exception& e) {
    ck.error("", fmt::format("YAML syntax error at line {}, column {}: {}", e.mark.line + 1, e.mark.column + 1, e.msg));
    return result;
  }
  if (!root.IsMap()) {
    ck.error("", "config must be a mapping");
    return result;
  }
  ck.only_keys(root, "",
               {"experiment_id", "output_root", "seed", "data", "families", "budgets", "normalizations", "folds",
                "workers", "training", "overrides", "evaluation"});

  ExperimentConfig c;
  if (auto v = root["experiment_id"]) {
    if (auto s = ck.scalar<std::string>(v, "experiment_id", "a string")) {
      if (is_filesystem_safe(*s)) c.experiment_id = *s;
      else ck.error("experiment_id", "'" + *s + "' is not filesystem-safe (use letters, digits, '-', '_', '.')");
    }
  } else {
    ck.error("experiment_id", "required key is missing");
  }
  if (auto v = root["output_root"]) {
    if (auto s = ck.scalar<std::string>(v, "output_root", "a path")) c.output_root = resolve(base_dir, *s);
  } else {
    c.output_root = resolve(base_dir, c.output_root);
  }
  if (auto v = root["seed"]) {
    if (auto s = ck.scalar<std::uint64_t>(v, "seed", "a nonnegative integer")) c.seed = *s;
  }

  if (auto v = root["families"]) {
    c.families = read_list<Family>(ck, v, "families", [&](const YAML::Node& n, const std::string& p) -> std::optional<Family> {
      auto s = ck.scalar<std::string>(n, p, "a family name");
      if (!s) return std::nullopt;
      auto f = parse_family(*s);
      if (!f) ck.error(p, "'" + *s + "' is not one of {cnn, unet, vit, mdn}");
      return f;
    });
  } else {
    ck.error("families", "required key is missing");
  }
  if (auto v = root["budgets"]) {
    c.budgets = read_list<double>(ck, v, "budgets", [&](const YAML::Node& n, const std::string& p) -> std::optional<double> {
      auto x = ck.number(n, p);
      if (x && !is_valid_budget(*x)) {
        ck.error(p, fmt::format("budget {} is not in the allowed set {{0.25, 0.5, 0.75, 1.0}}", *x));
        return std::nullopt;
      }
      return x;
    });
  }
  if (auto v = root["normalizations"]) {
    c.normalizations = read_list<NormalizationKind>(
        ck, v, "normalizations", [&](const YAML::Node& n, const std::string& p) -> std::optional<NormalizationKind> {
          auto s = ck.scalar<std::string>(n, p, "a normalization name");
          if (!s) return std::nullopt;
          auto k = parse_normalization(*s);
          if (!k) ck.error(p, "'" + *s + "' is not one of {min_max, z_score}");
          return k;
        });
  }
  if (auto v = root["folds"]) {
    if (auto k = ck.integer(v, "folds", 2, 1000)) c.folds = *k;
  }
  if (auto v = root["workers"]) {
    if (auto w = ck.integer(v, "workers", 1, 1024)) c.workers = *w;
  }

  if (auto d = root["data"]; d && ck.is_map(d, "data")) {
    ck.only_keys(d, "data",
                 {"source", "devices", "noise_realizations", "patches_per_record", "grid_size", "path", "test_count"});
    if (auto v = d["source"]) {
      if (auto s = ck.scalar<std::string>(v, "data.source", "a string")) {
        if (*s == "synth") c.data.source = DataSource::synth;
        else if (*s == "dataset") c.data.source = DataSource::dataset;
        else ck.error("data.source", "'" + *s + "' is not one of {synth, dataset}");
      }
    }
    if (auto v = d["devices"]) {
      if (auto x = ck.integer(v, "data.devices", 1, 1000000)) c.data.devices = *x;
    }
    if (auto v = d["noise_realizations"]) {
      if (auto x = ck.integer(v, "data.noise_realizations", 1, 1000000)) c.data.noise_realizations = *x;
    }
    if (auto v = d["patches_per_record"]) {
      if (auto x = ck.integer(v, "data.patches_per_record", 1, 1000000)) c.data.patches_per_record = *x;
    }
    if (auto v = d["grid_size"]) {
      if (auto x = ck.integer(v, "data.grid_size", kPatchSize, 4096)) c.data.grid_size = *x;
    }
    if (auto v = d["test_count"]) {
      if (auto x = ck.integer(v, "data.test_count", 1, 1 << 30)) c.data.test_count = static_cast<std::size_t>(*x);
    }
    if (auto v = d["path"]) {
      if (auto s = ck.scalar<std::string>(v, "data.path", "a path")) c.data.path = resolve(base_dir, *s);
    }
  }
  if (c.data.source == DataSource::dataset) {
    if (c.data.path.empty()) {
      ck.error("data.path", "required when data.source is 'dataset'");
    } else if (!std::filesystem::is_directory(c.data.path)) {
      ck.error("data.path", "directory '" + c.data.path.string() + "' does not exist");
    }
  } else {
    const std::size_t total = static_cast<std::size_t>(c.data.devices) * c.data.noise_realizations *
                              c.data.patches_per_record;
    if (c.data.test_count >= total) {
      ck.error("data.test_count", fmt::format("must be below the {} generated patches", total));
    } else {
      const double pool = static_cast<double>(total - c.data.test_count);
      for (double b : c.budgets) {
        if (std::llround(b * pool) < c.folds) {
          ck.error("folds", fmt::format("budget {} leaves {} patches for {} folds", b, std::llround(b * pool), c.folds));
        }
      }
    }
  }

  if (auto v = root["training"]) read_overrides(ck, v, "training", c.training);
  if (auto v = root["overrides"]; v && ck.is_map(v, "overrides")) {
    std::set<std::string> seen;
    for (const auto& kv : v) {
      const std::string key = kv.first.Scalar();
      if (!seen.insert(key).second) ck.error(join("overrides", key), "duplicate key");
      const auto f = parse_family(key);
      if (!f) {
        ck.error(join("overrides", key), "unknown family (allowed: cnn, unet, vit, mdn)");
        continue;
      }
      read_overrides(ck, kv.second, join("overrides", key), c.overrides[*f]);
    }
  }
  if (auto e = root["evaluation"]; e && ck.is_map(e, "evaluation")) {
    ck.only_keys(e, "evaluation", {"calibration_bins"});
    if (auto v = e["calibration_bins"]) {
      if (auto b = ck.integer(v, "evaluation.calibration_bins", 2, 1000)) c.calibration_bins = *b;
    }
  }

  if (result.errors.empty()) {
    for (Family f : c.families) {
      try {
        c.train_config(f, c.budgets.front(), c.normalizations.front()).validate();
      } catch (const ConfigError& e) {
        const bool has_override = c.overrides.count(f) > 0;
        ck.error(has_override ? join("overrides", std::string(to_string(f))) : "training",
                 fmt::format("{}: {}", to_string(f), e.what()));
      }
    }
  }
  if (result.errors.empty()) result.config = std::move(c);
  return result;
}

ConfigResult validate_config_file(const std::filesystem::path& file) {
  std::string text;
  try {
    text = read_file(file);
  } catch (const Error& e) {
    ConfigResult r;
    r.errors.push_back({"", e.what()});
    return r;
  }
  return validate_config(text, file.parent_path());
}

namespace {

std::string num(double v) { return fmt::format("{}", v); }

void emit_overrides(YAML::Emitter& out, const TrainingOverrides& o) {
  out << YAML::BeginMap;
  if (o.learning_rate) out << YAML::Key << "learning_rate" << YAML::Value << num(*o.learning_rate);
  if (o.weight_decay) out << YAML::Key << "weight_decay" << YAML::Value << num(*o.weight_decay);
  if (o.scheduler) out << YAML::Key << "scheduler" << YAML::Value << std::string(to_string(*o.scheduler));
  if (o.max_epochs) out << YAML::Key << "max_epochs" << YAML::Value << *o.max_epochs;
  if (o.patience) out << YAML::Key << "patience" << YAML::Value << *o.patience;
  if (o.batch_size) out << YAML::Key << "batch_size" << YAML::Value << *o.batch_size;
  if (o.dropout) out << YAML::Key << "dropout" << YAML::Value << num(*o.dropout);
  if (o.min_delta) out << YAML::Key << "min_delta" << YAML::Value << num(*o.min_delta);
  if (o.time_budget_s) out << YAML::Key << "time_budget_s" << YAML::Value << num(*o.time_budget_s);
  out << YAML::EndMap;
}

}  // namespace

std::string to_yaml(const ExperimentConfig& c) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "experiment_id" << YAML::Value << c.experiment_id;
  out << YAML::Key << "output_root" << YAML::Value << c.output_root.string();
  out << YAML::Key << "seed" << YAML::Value << c.seed;
  out << YAML::Key << "data" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "source" << YAML::Value << (c.data.source == DataSource::synth ? "synth" : "dataset");
  out << YAML::Key << "devices" << YAML::Value << c.data.devices;
  out << YAML::Key << "noise_realizations" << YAML::Value << c.data.noise_realizations;
  out << YAML::Key << "patches_per_record" << YAML::Value << c.data.patches_per_record;
  out << YAML::Key << "grid_size" << YAML::Value << c.data.grid_size;
  if (!c.data.path.empty()) out << YAML::Key << "path" << YAML::Value << c.data.path.string();
  out << YAML::Key << "test_count" << YAML::Value << c.data.test_count;
  out << YAML::EndMap;
  out << YAML::Key << "families" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (Family f : c.families) out << std::string(to_string(f));
  out << YAML::EndSeq;
  out << YAML::Key << "budgets" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (double b : c.budgets) out << num(b);
  out << YAML::EndSeq;
  out << YAML::Key << "normalizations" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (auto n : c.normalizations) out << std::string(to_string(n));
  out << YAML::EndSeq;
  out << YAML::Key << "folds" << YAML::Value << c.folds;
  out << YAML::Key << "workers" << YAML::Value << c.workers;
  out << YAML::Key << "training" << YAML::Value;
  emit_overrides(out, c.training);
  out << YAML::Key << "overrides" << YAML::Value << YAML::BeginMap;
  for (const auto& [f, o] : c.overrides) {
    out << YAML::Key << std::string(to_string(f)) << YAML::Value;
    emit_overrides(out, o);
  }
  out << YAML::EndMap;
  out << YAML::Key << "evaluation" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "calibration_bins" << YAML::Value << c.calibration_bins;
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace qdbench
