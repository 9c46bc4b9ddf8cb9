// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "qdbench/data.hpp"

#include "qdbench/error.hpp"
#include "qdbench/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace qdbench {

std::string_view to_string(NormalizationKind kind) {
  return kind == NormalizationKind::min_max ? "min_max" : "z_score";
}

std::optional<NormalizationKind> parse_normalization(std::string_view text) {
  if (text == "min_max") return NormalizationKind::min_max;
  if (text == "z_score") return NormalizationKind::z_score;
  return std::nullopt;
}

bool is_valid_budget(double fraction) {
  for (double b : kBudgetFractions) {
    if (fraction == b) return true;
  }
  return false;
}

LabelVector fractional_label(const StateGrid& state_patch) {
  std::array<std::size_t, kNumStates> counts{};
  const auto total = static_cast<std::size_t>(state_patch.size());
  if (total == 0) throw ShapeError("fractional_label: empty state patch");
  for (Eigen::Index i = 0; i < state_patch.size(); ++i) {
    const auto v = state_patch.data()[i];
    if (v >= kNumStates) {
      throw DataError("fractional_label: state value " + std::to_string(v) +
                      " outside {0..4} at flat index " + std::to_string(i));
    }
    ++counts[v];
  }
  LabelVector out;
  for (int s = 0; s < kNumStates; ++s) {
    out.p[s] = static_cast<double>(counts[s]) / static_cast<double>(total);
  }
  return out;
}

std::vector<Patch> extract_patches(const CSDRecord& record, int count, std::uint64_t seed) {
  const auto rows = record.signal.rows();
  const auto cols = record.signal.cols();
  if (rows < kPatchSize || cols < kPatchSize) {
    throw ShapeError("extract_patches: record " + record.record_id + " is " +
                     std::to_string(rows) + "x" + std::to_string(cols) +
                     ", smaller than 30x30");
  }
  if (record.state_map.rows() != rows || record.state_map.cols() != cols) {
    throw ShapeError("extract_patches: signal and state_map shapes differ in " + record.record_id);
  }
  if (count < 1) throw ConfigError("extract_patches: count must be >= 1");

  Rng rng(seed);
  std::vector<Patch> patches;
  patches.reserve(static_cast<std::size_t>(count));
  const auto row_slots = static_cast<std::uint64_t>(rows - kPatchSize + 1);
  const auto col_slots = static_cast<std::uint64_t>(cols - kPatchSize + 1);
  for (int i = 0; i < count; ++i) {
    const auto r0 = static_cast<Eigen::Index>(rng.below(row_slots));
    const auto c0 = static_cast<Eigen::Index>(rng.below(col_slots));
    Patch p;
    p.pixels = record.signal.block(r0, c0, kPatchSize, kPatchSize);
    const StateGrid states = record.state_map.block(r0, c0, kPatchSize, kPatchSize);
    p.label = fractional_label(states);
    p.parent_id = record.record_id;
    p.noise_id = record.noise_id;
    p.center = {static_cast<int>(r0) + kPatchSize / 2, static_cast<int>(c0) + kPatchSize / 2};
    if (!record.v1_axis.empty()) {
      p.v1_window.assign(record.v1_axis.begin() + c0, record.v1_axis.begin() + c0 + kPatchSize);
    }
    if (!record.v2_axis.empty()) {
      p.v2_window.assign(record.v2_axis.begin() + r0, record.v2_axis.begin() + r0 + kPatchSize);
    }
    patches.push_back(std::move(p));
  }
  return patches;
}

RealGrid unify_size(const RealGrid& image) {
  if (image.rows() < kPatchSize || image.cols() < kPatchSize) {
    throw ShapeError("unify_size: input " + std::to_string(image.rows()) + "x" +
                     std::to_string(image.cols()) + " is smaller than 30x30; upscaling refused");
  }
  const auto r0 = (image.rows() - kPatchSize) / 2;
  const auto c0 = (image.cols() - kPatchSize) / 2;
  return image.block(r0, c0, kPatchSize, kPatchSize);
}

RealGrid normalize(const RealGrid& pixels, NormalizationScheme scheme) {
  RealGrid out(pixels.rows(), pixels.cols());
  if (pixels.size() == 0) return out;
  if (scheme.kind == NormalizationKind::min_max) {
    const double lo = pixels.minCoeff();
    const double hi = pixels.maxCoeff();
    if (!(hi > lo)) {
      out.setZero();
      return out;
    }
    out = (pixels.array() - lo) / (hi - lo);
    return out;
  }
  const double n = static_cast<double>(pixels.size());
  const double mean = pixels.sum() / n;
  const double var = (pixels.array() - mean).square().sum() / n;
  const double sd = std::sqrt(var);
  if (!(sd > 0.0)) {
    out.setZero();
    return out;
  }
  out = (pixels.array() - mean) / sd;
  return out;
}

DatasetSplit make_splits(std::size_t pool_size, std::size_t test_count, double budget_fraction,
                         std::uint64_t seed) {
  if (!is_valid_budget(budget_fraction)) {
    throw ConfigError("make_splits: budget fraction " + std::to_string(budget_fraction) +
                      " not in {0.25, 0.5, 0.75, 1.0}");
  }
  if (test_count == 0 || test_count >= pool_size) {
    throw ConfigError("make_splits: require 0 < test_count < pool_size (got test_count=" +
                      std::to_string(test_count) + ", pool_size=" + std::to_string(pool_size) +
                      ")");
  }
  std::vector<std::size_t> ids(pool_size);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  Rng test_rng(derive_seed(seed, 1));
  test_rng.shuffle(std::span(ids));

  DatasetSplit split;
  split.seed = seed;
  split.budget_fraction = budget_fraction;
  split.test_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(test_count));
  std::vector<std::size_t> rest(ids.begin() + static_cast<std::ptrdiff_t>(test_count), ids.end());
  // Canonical order before the budget draw so the permutation depends only
  // on the seed and the remainder set.
  std::sort(rest.begin(), rest.end());
  Rng budget_rng(derive_seed(seed, 2));
  budget_rng.shuffle(std::span(rest));
  const auto take = static_cast<std::size_t>(
      std::llround(budget_fraction * static_cast<double>(rest.size())));
  split.pool_ids.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(take));
  return split;
}

}  // namespace qdbench
