// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "qdbench/cells.hpp"
#include "qdbench/config.hpp"
#include "qdbench/data.hpp"
#include "qdbench/metrics.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace qdbench {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitPartial = 2;
inline constexpr int kExitIo = 3;

struct RunOptions {
  bool resume = false;     ///< keep completed folds and cells
  bool overwrite = false;  ///< delete an existing run directory first
  std::optional<int> workers;
};

struct CellFailure {
  std::string cell;
  int fold = -1;  ///< -1 for cell-level failures
  std::string error;
};

struct RunSummary {
  std::filesystem::path run_dir;
  int cells_total = 0;
  int cells_completed = 0;
  int cells_failed = 0;
  int folds_trained = 0;
  int folds_reused = 0;
  std::vector<CellFailure> failures;
  int exit_code = kExitOk;
};

/// Synthetic patches for a synth config, or the dataset's patches plus
/// patches cut from its records.
std::vector<Patch> prepare_patches(const ExperimentConfig& config);

/// Runs every cell of the grid. Throws ConfigError before any training when
/// the run directory is not fresh (without resume/overwrite) or belongs to a
/// different config, and IoError on unwritable output. Fold and cell
/// failures are recorded in failures.json and reflected in exit_code.
RunSummary run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// Header of aggregate/metrics.csv.
std::string metrics_csv_header();

/// Loads a checkpoint and scores it on every patch of a saved dataset
/// (records are cut into patches_per_record patches), normalizing patches the
/// way the checkpoint was trained.
MetricsReport evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir,
                                  int calibration_bins = 10, int patches_per_record = 10, std::uint64_t seed = 0);

}  // namespace qdbench
