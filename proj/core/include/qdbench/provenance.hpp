// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "qdbench/config.hpp"

#include <string>
#include <string_view>

namespace qdbench {

/// Lowercase hex SHA-256 of the bytes.
std::string sha256_hex(std::string_view bytes);

/// Commit of the source tree the binary was configured from, or "unknown".
std::string source_commit();

/// UTC time as ISO 8601 with a trailing Z.
std::string utc_timestamp();

/// JSON provenance record for a run whose resolved config text is
/// resolved_yaml (its hash is stored as config_sha256).
std::string provenance_json(const ExperimentConfig& config, const std::string& resolved_yaml);

}  // namespace qdbench
