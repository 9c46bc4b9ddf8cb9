// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "qdbench/data.hpp"
#include "qdbench/models.hpp"
#include "qdbench/states.hpp"
#include "qdbench/tensor.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qdbench {

enum class Scheduler { constant, cosine };

std::string_view to_string(Scheduler s);
std::optional<Scheduler> parse_scheduler(std::string_view text);

struct TrainConfig {
  Family family = Family::cnn;
  double learning_rate = 5e-4;
  double weight_decay = 2e-4;
  Scheduler scheduler = Scheduler::constant;
  int max_epochs = 150;
  int patience = 10;
  std::size_t batch_size = 128;
  int folds = 10;
  double budget_fraction = 1.0;
  NormalizationKind normalization = NormalizationKind::min_max;
  std::uint64_t seed = 0;

  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Validation loss must drop below best - min_delta to count as improvement.
  double min_delta = 1e-6;
  /// Family default when unset.
  std::optional<double> dropout;
  /// Wall-clock cap per fold in seconds; 0 disables it.
  double time_budget_s = 0.0;

  /// Throws ConfigError naming the first violated invariant.
  void validate() const;
};

/// Optimizer and schedule defaults per family:
///   cnn  5e-4 / 2e-4 constant    unet 5e-4 / 1e-4 cosine
///   vit  1e-4 / 3e-4 cosine      mdn  1e-3 / 1e-4 cosine
TrainConfig default_train_config(Family family);

ModelSpec model_spec_for(const TrainConfig& config);

/// Mean over rows of sum_i t_i (log t_i - log max(q_i, 1e-8)), with 0 log 0 = 0.
/// Throws ValidationError when rows mismatch or leave the simplex by > 1e-4.
double kl_loss(const ProbRows& pred, const ProbRows& target);

/// Same loss without validation; writes dL/dq into grad (shape of pred).
double kl_loss_and_grad(const Tensor<float>& pred, const ProbRows& target, Tensor<float>& grad);

/// Learning rate for epoch index t in [0, max_epochs]; epoch e (1-based) uses t = e - 1.
/// Throws ScheduleError outside that range.
double lr_at(int t, const TrainConfig& config);

/// k disjoint index sets covering 0..n-1, stratified by label argmax.
/// Each set is sorted ascending.
std::vector<std::vector<std::size_t>> stratified_folds(const std::vector<LabelVector>& labels, int k,
                                                       std::uint64_t seed);

/// Normalized inputs (N, 30, 30) with their fractional targets.
struct LabeledSet {
  Tensor<float> x;
  ProbRows y;

  std::size_t size() const { return static_cast<std::size_t>(y.rows()); }
  std::vector<LabelVector> labels() const;
};

LabeledSet make_labeled_set(const std::vector<Patch>& patches, std::span<const std::size_t> indices,
                            NormalizationScheme scheme);
LabeledSet subset(const LabeledSet& set, std::span<const std::size_t> indices);

struct FoldData {
  LabeledSet train;
  LabeledSet val;
};

/// Fold i of a partition: validation = folds[i], training = the rest.
FoldData fold_data(const LabeledSet& pool, const std::vector<std::vector<std::size_t>>& folds, std::size_t i);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct ResourceStats {
  double wall_clock_s = 0.0;
  std::size_t peak_memory_bytes = 0;
  int epochs_run = 0;
  std::size_t parameter_count = 0;
};

struct FoldResult {
  int fold_index = 0;
  int best_epoch = 0;
  int epochs_run = 0;
  std::vector<EpochRecord> curve;
  std::string checkpoint;
  ResourceStats resources;
  bool time_limited = false;
};

/// What the early-stopping loop drives. Epochs are 1-based.
class FoldTrainable {
 public:
  virtual ~FoldTrainable() = default;
  /// Runs one epoch at the given learning rate and returns its training loss.
  virtual double train_epoch(int epoch, double lr) = 0;
  virtual double validation_loss() = 0;
  /// Called whenever the validation loss improves.
  virtual void keep_best(int epoch) = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains until max_epochs, until patience epochs pass without improvement,
/// or until the time budget runs out. Fills best_epoch, epochs_run, curve and
/// time_limited.
FoldResult run_epochs(FoldTrainable& trainable, const TrainConfig& config, const EpochCallback& on_epoch = {});

struct TrainedFold {
  FoldResult result;
  ModelInstance model;  ///< weights from best_epoch, evaluation mode
};

/// Throws NumericalError (epoch, batch, lr) on a non-finite loss.
TrainedFold train_one_fold(std::uint64_t model_seed, const FoldData& data, const TrainConfig& config,
                           const EpochCallback& on_epoch = {});

/// One TrainedFold per fold; model seeds derive from (config.seed, fold).
/// Errors are rethrown with the fold index prepended.
std::vector<TrainedFold> cross_validate(const LabeledSet& pool, const TrainConfig& config,
                                        const EpochCallback& on_epoch = {});

/// Evaluation-mode predictions in chunks of batch rows.
ProbRows predict_probs(const ModelInstance& model, const Tensor<float>& x, std::size_t batch = 256);

}  // namespace qdbench
