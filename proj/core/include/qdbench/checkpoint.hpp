// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "qdbench/data.hpp"
#include "qdbench/models.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace qdbench {

struct CheckpointMeta {
  int epoch = 0;
  NormalizationKind normalization = NormalizationKind::min_max;
  std::map<std::string, double> metrics;
};

struct LoadedCheckpoint {
  ModelInstance model;
  CheckpointMeta meta;
};

/// Layout: "QDBCKPT1", u64 LE manifest length, JSON manifest, then the
/// weight arrays as little-endian float32 in manifest order.
void save_checkpoint(const std::filesystem::path& path, const ModelInstance& model, const CheckpointMeta& meta);

/// Throws IoError on unreadable or malformed files and ShapeError when the
/// stored arrays do not fit the recorded spec.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace qdbench
