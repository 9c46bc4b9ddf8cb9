// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace qdbench {

struct ReportResult {
  std::vector<std::filesystem::path> files;  ///< written, relative to the run directory
  std::vector<std::string> missing_cells;    ///< expected cells without aggregate/metrics.csv
};

/// Renders report/ from cells/*/aggregate/metrics.csv alone: epochs_summary.csv,
/// mse_summary.csv, epochs_<norm>.png and mse_test_<norm>.png. Expected cells
/// come from config.resolved.yaml when present; absent ones are listed in
/// report/missing_cells.txt and skipped. Throws IoError if run_dir is missing.
ReportResult write_report(const std::filesystem::path& run_dir);

}  // namespace qdbench
