// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "qdbench/grid.hpp"
#include "qdbench/states.hpp"
#include "qdbench/synth.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qdbench {

inline constexpr int kPatchSize = 30;
inline constexpr int kPatchPixels = kPatchSize * kPatchSize;

/// Per-state pixel fractions (p_ND, p_SDL, p_SDC, p_SDR, p_DD).
struct LabelVector {
  std::array<double, kNumStates> p{};

  double operator[](int i) const { return p[static_cast<std::size_t>(i)]; }
  int argmax() const { return argmax_state(p); }
  bool operator==(const LabelVector&) const = default;
};

struct Patch {
  std::string id;   ///< assigned when saved if empty
  RealGrid pixels;  ///< always 30 x 30
  LabelVector label;
  std::string parent_id;
  std::array<int, 2> center{};  ///< (row, col) of pixel (15, 15) in the parent
  std::string noise_id;
  std::vector<double> v1_window;
  std::vector<double> v2_window;
};

enum class NormalizationKind { min_max, z_score };

struct NormalizationScheme {
  NormalizationKind kind = NormalizationKind::min_max;
};

std::string_view to_string(NormalizationKind kind);
std::optional<NormalizationKind> parse_normalization(std::string_view text);

inline constexpr std::array<double, 4> kBudgetFractions = {0.25, 0.50, 0.75, 1.00};
bool is_valid_budget(double fraction);

struct DatasetSplit {
  std::vector<std::size_t> test_ids;
  std::vector<std::size_t> pool_ids;  ///< budgeted train/validation pool
  double budget_fraction = 1.0;
  std::uint64_t seed = 0;
};

/// Fraction of pixels carrying each state. Throws DataError on a label > 4.
LabelVector fractional_label(const StateGrid& state_patch);

/// Samples count 30x30 windows with uniform in-bounds anchors. The label of
/// each window is the fractional label of the co-located state crop.
std::vector<Patch> extract_patches(const CSDRecord& record, int count, std::uint64_t seed);

/// Center crop to 30x30 with offset floor((n - 30) / 2) per axis. Never resamples.
RealGrid unify_size(const RealGrid& image);

/// Per-patch rescaling. A constant patch maps to all zeros under either scheme.
/// z_score uses the population standard deviation.
RealGrid normalize(const RealGrid& pixels, NormalizationScheme scheme);

/// Test ids are drawn first from a seeded permutation; the budget pool is the
/// leading round(fraction * remainder) ids of a second permutation of the
/// remainder, so pools for the same seed are nested.
DatasetSplit make_splits(std::size_t pool_size, std::size_t test_count, double budget_fraction,
                         std::uint64_t seed);

}  // namespace qdbench
