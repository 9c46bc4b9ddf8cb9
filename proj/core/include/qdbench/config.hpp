// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "qdbench/data.hpp"
#include "qdbench/models.hpp"
#include "qdbench/training.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qdbench {

enum class DataSource { synth, dataset };

struct DataConfig {
  DataSource source = DataSource::synth;
  // synth
  int devices = 50;
  int noise_realizations = 5;
  int patches_per_record = 10;
  int grid_size = 250;
  // dataset: a directory written by save_dataset; records are cut into
  // patches_per_record patches each
  std::filesystem::path path;
  /// Held-out test patches taken before budgeting.
  std::size_t test_count = 500;

  bool operator==(const DataConfig&) const = default;
};

/// Optional per-key replacements for a TrainConfig.
struct TrainingOverrides {
  std::optional<double> learning_rate;
  std::optional<double> weight_decay;
  std::optional<Scheduler> scheduler;
  std::optional<int> max_epochs;
  std::optional<int> patience;
  std::optional<std::size_t> batch_size;
  std::optional<double> dropout;
  std::optional<double> min_delta;
  std::optional<double> time_budget_s;

  void apply_to(TrainConfig& c) const;
  bool operator==(const TrainingOverrides&) const = default;
};

struct ExperimentConfig {
  std::string experiment_id;
  std::filesystem::path output_root = "runs";
  std::uint64_t seed = 0;
  DataConfig data;
  std::vector<Family> families;
  std::vector<double> budgets = {1.0};
  std::vector<NormalizationKind> normalizations = {NormalizationKind::min_max};
  int folds = 10;
  int workers = 1;
  TrainingOverrides training;                       ///< applies to every family
  std::map<Family, TrainingOverrides> overrides;    ///< then per family
  int calibration_bins = 10;

  /// Family defaults, then `training`, then `overrides[family]`.
  TrainConfig train_config(Family family, double budget, NormalizationKind norm) const;

  bool operator==(const ExperimentConfig&) const = default;
};

struct ConfigIssue {
  std::string path;  ///< e.g. "budgets[1]" or "training.learning_rate"
  std::string message;
};

struct ConfigResult {
  std::optional<ExperimentConfig> config;  ///< set only when errors is empty
  std::vector<ConfigIssue> errors;
};

/// Parses and checks a YAML experiment config, collecting every problem.
/// Relative paths resolve against base_dir.
ConfigResult validate_config(std::string_view yaml_text, const std::filesystem::path& base_dir = {});

/// Reads the file, then validate_config with its directory as base.
ConfigResult validate_config_file(const std::filesystem::path& file);

/// Canonical YAML with every default spelled out; validates back to the same config.
std::string to_yaml(const ExperimentConfig& config);

}  // namespace qdbench
