// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "qdbench/config.hpp"

#include <fmt/format.h>

#include <string>
#include <vector>

namespace qdbench {

/// One (family, budget, normalization) combination of an experiment grid.
struct Cell {
  Family family = Family::cnn;
  double budget = 1.0;
  NormalizationKind normalization = NormalizationKind::min_max;

  /// Directory name, e.g. "cnn_0.25_min_max".
  std::string name() const {
    return fmt::format("{}_{:.2f}_{}", to_string(family), budget, to_string(normalization));
  }
};

/// Families outermost, then budgets, then normalizations, in config order.
inline std::vector<Cell> enumerate_cells(const ExperimentConfig& config) {
  std::vector<Cell> cells;
  for (Family f : config.families) {
    for (double b : config.budgets) {
      for (NormalizationKind n : config.normalizations) cells.push_back({f, b, n});
    }
  }
  return cells;
}

}  // namespace qdbench
