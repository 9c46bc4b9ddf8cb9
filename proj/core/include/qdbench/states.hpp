// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <string_view>

namespace qdbench {

/// Device operating regimes of a double quantum dot, in label-vector order.
enum class State : std::uint8_t {
  no_dot = 0,
  single_left = 1,
  single_center = 2,
  single_right = 3,
  double_dot = 4,
};

inline constexpr int kNumStates = 5;

inline constexpr std::array<std::string_view, kNumStates> kStateNames = {
    "ND", "SD_L", "SD_C", "SD_R", "DD"};

constexpr std::string_view state_name(State s) {
  return kStateNames[static_cast<std::size_t>(s)];
}

/// N x 5 rows of probabilities (predictions or fractional targets).
using ProbRows = Eigen::Matrix<double, Eigen::Dynamic, kNumStates, Eigen::RowMajor>;

/// Index of the largest entry; ties resolve to the lowest index.
template <typename Row>
int argmax_state(const Row& row) {
  int best = 0;
  for (int i = 1; i < kNumStates; ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

}  // namespace qdbench
