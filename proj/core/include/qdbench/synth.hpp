// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "qdbench/grid.hpp"
#include "qdbench/states.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace qdbench {

/// Geometry and noise of one synthetic charge-stability diagram.
///
/// Both plunger axes span [0, 1] in arbitrary voltage units. Sweeping V1
/// (columns, plunger P1) fills the right dot; sweeping V2 (rows, plunger P2)
/// fills the left dot. Periods are in voltage units, edge_width in pixels.
struct SynthParams {
  int grid_size = 250;
  double v1_on = 0.2;
  double v2_on = 0.2;
  double v_merge = 0.7;
  double period1 = 10.0 / 249.0;
  double period2 = 10.0 / 249.0;
  double cross12 = 0.2;
  double cross21 = 0.2;
  double edge_width = 1.5;
  double noise_white = 0.05;
  double noise_gradient = 0.0;
  std::uint64_t seed = 0;

  /// Throws ParameterError naming the first violated invariant.
  void validate() const;

  bool operator==(const SynthParams&) const = default;
};

struct CSDRecord {
  RealGrid signal;
  StateGrid state_map;
  std::vector<double> v1_axis;  ///< one entry per column
  std::vector<double> v2_axis;  ///< one entry per row
  std::string record_id;
  std::string noise_id;
};

/// Region of the (V1, V2) plane. The merged-dot condition overrides the
/// others so the partition is single-valued.
State state_at(const SynthParams& params, double v1, double v2);

/// Renders the state map and sensor signal. Bit-identical for equal params.
CSDRecord generate_csd(const SynthParams& params);

/// Params drawn from fixed uniform ranges: turn-ons in [0.1, 1/3], merge
/// threshold in [0.6, 0.8], line periods of 6-14 px on a 250 px grid,
/// cross-capacitances in [0.1, 0.35], edge width in [1, 2] px, white noise
/// in [0.02, 0.15], background slope in [-0.2, 0.2].
SynthParams default_params(std::uint64_t seed);

}  // namespace qdbench
