// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace qdbench {

/// Writes to "<path>.tmp" and renames over path, so readers never observe a
/// partially written file. Creates parent directories. Throws IoError.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Whole-file read. Throws IoError when the file cannot be opened.
std::string read_file(const std::filesystem::path& path);

/// Letters, digits, '.', '_' and '-' only; not empty, not "." or "..".
bool is_filesystem_safe(std::string_view name);

}  // namespace qdbench
