// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "qdbench/states.hpp"
#include "qdbench/tensor.hpp"

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace qdbench {

using ConfusionMatrix = std::array<std::array<std::size_t, kNumStates>, kNumStates>;

struct CalibrationBin {
  double center = 0.0;
  double mean_confidence = 0.0;  ///< 0 when count == 0
  double observed_fraction = 0.0;
  std::size_t count = 0;
};

struct MetricsReport {
  double mse_score = 0.0;
  double accuracy = 0.0;
  ConfusionMatrix confusion{};  ///< [true][pred]
  std::vector<CalibrationBin> calibration;
  std::size_t n_samples = 0;

  bool operator==(const MetricsReport&) const = default;
};

bool operator==(const CalibrationBin& a, const CalibrationBin& b);

/// Probabilities from a float network output (N x 5).
ProbRows to_prob_rows(const Tensor<float>& probs);

/// 1 - mean over all N x 5 components of (pred - target)^2.
/// Throws ValidationError on shape mismatch or rows off the simplex by > 1e-4.
double mse_score(const ProbRows& pred, const ProbRows& target);
/// Fraction of rows whose argmaxes agree (ties toward the lowest index).
double accuracy(const ProbRows& pred, const ProbRows& target);
ConfusionMatrix confusion_matrix(const ProbRows& pred, const ProbRows& target);
/// Equal-width bins on [0, 1] over all N x 5 (prediction, target) pairs.
std::vector<CalibrationBin> calibration_curve(const ProbRows& pred, const ProbRows& target, int bins);

MetricsReport evaluate_predictions(const ProbRows& pred, const ProbRows& target, int calibration_bins = 10);

/// Five-number summary plus mean and sample standard deviation. Quantiles
/// interpolate linearly between order statistics.
struct Summary {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0, mean = 0, std = 0;
  std::size_t n = 0;
};

/// Throws ValidationError on empty input.
Summary summarize(std::span<const double> values);

/// Linear-interpolation quantile of sorted values, q in [0, 1].
double quantile_sorted(std::span<const double> sorted, double q);

struct FoldMetrics {
  int fold = 0;
  MetricsReport metrics;
  int best_epoch = 0;
  int epochs_run = 0;
  double wall_clock_s = 0.0;
  std::size_t peak_memory_bytes = 0;
  std::size_t parameter_count = 0;
};

/// Per-metric summaries over folds, keyed by metric name (mse_score,
/// accuracy, best_epoch, epochs_run, wall_clock_s, peak_memory_bytes).
/// Throws ValidationError on empty input.
std::map<std::string, Summary> aggregate_folds(const std::vector<FoldMetrics>& folds);

/// CSV serializations. Rows follow fold order.
std::string summary_csv(const std::map<std::string, Summary>& summaries);
std::string confusion_csv(const std::vector<FoldMetrics>& folds);
std::string calibration_csv(const std::vector<FoldMetrics>& folds);

}  // namespace qdbench
