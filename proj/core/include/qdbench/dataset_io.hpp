// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "qdbench/data.hpp"
#include "qdbench/synth.hpp"

#include <filesystem>
#include <variant>
#include <vector>

namespace qdbench {

using DatasetItem = std::variant<CSDRecord, Patch>;

inline constexpr int kDatasetSchemaVersion = 1;

/// Writes manifest.json plus one little-endian binary file per item:
/// records store float64 signal then uint8 state map, patches store the
/// float64 pixels. Both row-major. Output is byte-stable for equal input.
void save_dataset(const std::filesystem::path& dir, const std::vector<DatasetItem>& items);

/// Reads and validates a dataset directory, returning items in manifest
/// order. Throws IngestionError naming the file and field at fault.
std::vector<DatasetItem> load_dataset(const std::filesystem::path& dir);

std::vector<Patch> patches_of(const std::vector<DatasetItem>& items);
std::vector<CSDRecord> records_of(const std::vector<DatasetItem>& items);

}  // namespace qdbench
