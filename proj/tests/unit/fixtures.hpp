// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "qdbench/data.hpp"
#include "qdbench/rng.hpp"
#include "qdbench/synth.hpp"
#include "qdbench/training.hpp"

#include <numeric>
#include <vector>

namespace qdbench::testing {

/// `devices` synthetic diagrams of side `grid`, `per_device` patches each.
inline std::vector<Patch> synthetic_patches(int devices, int per_device, std::uint64_t seed = 0, int grid = 90) {
  std::vector<Patch> out;
  for (int d = 0; d < devices; ++d) {
    SynthParams p = default_params(derive_seed(seed, static_cast<std::uint64_t>(d)));
    p.grid_size = grid;
    auto patches = extract_patches(generate_csd(p), per_device, derive_seed(seed, 1000 + d));
    out.insert(out.end(), patches.begin(), patches.end());
  }
  return out;
}

inline LabeledSet labeled(const std::vector<Patch>& patches,
                          NormalizationKind kind = NormalizationKind::min_max) {
  std::vector<std::size_t> idx(patches.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return make_labeled_set(patches, idx, {kind});
}

}  // namespace qdbench::testing
