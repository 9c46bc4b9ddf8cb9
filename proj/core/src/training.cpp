// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "qdbench/training.hpp"

#include "qdbench/error.hpp"
#include "qdbench/optim.hpp"
#include "qdbench/resources.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace qdbench {

std::string_view to_string(Scheduler s) {
  return s == Scheduler::constant ? "constant" : "cosine";
}

std::optional<Scheduler> parse_scheduler(std::string_view text) {
  if (text == "constant") return Scheduler::constant;
  if (text == "cosine") return Scheduler::cosine;
  return std::nullopt;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("weight_decay must be >= 0");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1 || patience >= max_epochs) throw ConfigError("patience must lie in [1, max_epochs)");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (folds < 2) throw ConfigError("folds must be >= 2");
  if (!is_valid_budget(budget_fraction)) throw ConfigError("budget_fraction must be one of 0.25, 0.5, 0.75, 1.0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
  if (!(min_delta >= 0.0)) throw ConfigError("min_delta must be >= 0");
  if (dropout && !(*dropout >= 0.0 && *dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(time_budget_s >= 0.0)) throw ConfigError("time_budget_s must be >= 0");
}

TrainConfig default_train_config(Family family) {
  TrainConfig c;
  c.family = family;
  switch (family) {
    case Family::cnn:
      c.learning_rate = 5e-4;
      c.weight_decay = 2e-4;
      c.scheduler = Scheduler::constant;
      break;
    case Family::unet:
      c.learning_rate = 5e-4;
      c.weight_decay = 1e-4;
      c.scheduler = Scheduler::cosine;
      break;
    case Family::vit:
      c.learning_rate = 1e-4;
      c.weight_decay = 3e-4;
      c.scheduler = Scheduler::cosine;
      break;
    case Family::mdn:
      c.learning_rate = 1e-3;
      c.weight_decay = 1e-4;
      c.scheduler = Scheduler::cosine;
      break;
  }
  return c;
}

ModelSpec model_spec_for(const TrainConfig& config) {
  ModelSpec spec = default_spec(config.family);
  if (config.dropout) spec.dropout = *config.dropout;
  return spec;
}

// ----------------------------------------------------------------- loss

constexpr double kProbFloor = 1e-8;

double kl_loss(const ProbRows& pred, const ProbRows& target) {
  if (pred.rows() != target.rows() || pred.rows() == 0) {
    throw ValidationError(fmt::format("kl_loss: {} prediction rows vs {} target rows", pred.rows(), target.rows()));
  }
  double total = 0.0;
  for (Eigen::Index r = 0; r < pred.rows(); ++r) {
    const double sp = pred.row(r).sum(), st = target.row(r).sum();
    if (!(std::abs(sp - 1.0) <= 1e-4) || !(std::abs(st - 1.0) <= 1e-4)) {
      throw ValidationError(fmt::format("kl_loss: row {} off the simplex (pred sum {}, target sum {})", r, sp, st));
    }
    for (int i = 0; i < kNumStates; ++i) {
      const double t = target(r, i);
      if (t > 0.0) total += t * (std::log(t) - std::log(std::max(pred(r, i), kProbFloor)));
    }
  }
  return total / static_cast<double>(pred.rows());
}

double kl_loss_and_grad(const Tensor<float>& pred, const ProbRows& target, Tensor<float>& grad) {
  const std::size_t n = pred.dim(0);
  grad = Tensor<float>(pred.shape());
  double total = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (int i = 0; i < kNumStates; ++i) {
      const double t = target(static_cast<Eigen::Index>(r), i);
      if (t <= 0.0) continue;
      const double q = pred[r * kNumStates + i];
      if (q <= kProbFloor) {
        total += t * (std::log(t) - std::log(kProbFloor));
      } else {
        total += t * (std::log(t) - std::log(q));
        grad[r * kNumStates + i] = static_cast<float>(-t / q * inv_n);
      }
    }
  }
  return total * inv_n;
}

double lr_at(int t, const TrainConfig& config) {
  if (t < 0 || t > config.max_epochs) {
    throw ScheduleError(fmt::format("lr_at: epoch index {} outside [0, {}]", t, config.max_epochs));
  }
  if (config.scheduler == Scheduler::constant) return config.learning_rate;
  const double T = config.max_epochs;
  return 0.5 * config.learning_rate * (1.0 + std::cos(std::numbers::pi * t / T));
}

// ---------------------------------------------------------------- folds

std::vector<std::vector<std::size_t>> stratified_folds(const std::vector<LabelVector>& labels, int k,
                                                       std::uint64_t seed) {
  if (k < 2) throw ConfigError(fmt::format("stratified_folds: k must be >= 2, got {}", k));
  if (labels.size() < static_cast<std::size_t>(k)) {
    throw ConfigError(fmt::format("stratified_folds: {} items cannot fill {} folds", labels.size(), k));
  }
  std::array<std::vector<std::size_t>, kNumStates> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i].argmax()].push_back(i);

  Rng rng(derive_seed(seed, 0x5f01d));
  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
  std::size_t next = 0;  // dealing continues across classes so fold sizes stay balanced
  for (int c = 0; c < kNumStates; ++c) {
    auto& members = by_class[c];
    if (!members.empty() && members.size() < static_cast<std::size_t>(k)) {
      spdlog::warn("stratified_folds: class {} has {} members for {} folds; it cannot appear in every fold",
                   kStateNames[c], members.size(), k);
    }
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t idx : members) {
      folds[next].push_back(idx);
      next = (next + 1) % folds.size();
    }
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

// ----------------------------------------------------------------- data

std::vector<LabelVector> LabeledSet::labels() const {
  std::vector<LabelVector> out(size());
  for (std::size_t r = 0; r < out.size(); ++r) {
    for (int i = 0; i < kNumStates; ++i) out[r].p[i] = y(static_cast<Eigen::Index>(r), i);
  }
  return out;
}

LabeledSet make_labeled_set(const std::vector<Patch>& patches, std::span<const std::size_t> indices,
                            NormalizationScheme scheme) {
  LabeledSet set;
  set.x = Tensor<float>(Shape{indices.size(), kPatchSize, kPatchSize});
  set.y = ProbRows(static_cast<Eigen::Index>(indices.size()), kNumStates);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= patches.size()) throw DataError(fmt::format("patch index {} out of range", indices[r]));
    const Patch& p = patches[indices[r]];
    const RealGrid img = normalize(unify_size(p.pixels), scheme);
    float* dst = set.x.data() + r * kPatchPixels;
    for (int i = 0; i < kPatchPixels; ++i) dst[i] = static_cast<float>(img.data()[i]);
    for (int i = 0; i < kNumStates; ++i) set.y(static_cast<Eigen::Index>(r), i) = p.label[i];
  }
  return set;
}

LabeledSet subset(const LabeledSet& set, std::span<const std::size_t> indices) {
  const std::size_t row = set.x.size() / std::max<std::size_t>(set.size(), 1);
  Shape shape = set.x.shape();
  shape[0] = indices.size();
  LabeledSet out;
  out.x = Tensor<float>(shape);
  out.y = ProbRows(static_cast<Eigen::Index>(indices.size()), kNumStates);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    std::copy_n(set.x.data() + indices[r] * row, row, out.x.data() + r * row);
    out.y.row(static_cast<Eigen::Index>(r)) = set.y.row(static_cast<Eigen::Index>(indices[r]));
  }
  return out;
}

FoldData fold_data(const LabeledSet& pool, const std::vector<std::vector<std::size_t>>& folds, std::size_t i) {
  if (i >= folds.size()) throw ConfigError(fmt::format("fold {} of {}", i, folds.size()));
  std::vector<std::size_t> train;
  for (std::size_t j = 0; j < folds.size(); ++j) {
    if (j != i) train.insert(train.end(), folds[j].begin(), folds[j].end());
  }
  std::sort(train.begin(), train.end());
  return {subset(pool, train), subset(pool, folds[i])};
}

ProbRows predict_probs(const ModelInstance& model, const Tensor<float>& x, std::size_t batch) {
  const std::size_t n = x.dim(0);
  const std::size_t row = x.size() / std::max<std::size_t>(n, 1);
  ProbRows out(static_cast<Eigen::Index>(n), kNumStates);
  Shape shape = x.shape();
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t m = std::min(batch, n - start);
    shape[0] = m;
    Tensor<float> chunk(shape);
    std::copy_n(x.data() + start * row, m * row, chunk.data());
    const Tensor<float> p = model.predict(chunk);
    for (std::size_t i = 0; i < m * kNumStates; ++i) out.data()[start * kNumStates + i] = p[i];
  }
  return out;
}

// ------------------------------------------------------------- training

FoldResult run_epochs(FoldTrainable& trainable, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  FoldResult result;
  Stopwatch clock;
  double best = std::numeric_limits<double>::infinity();
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr_at(epoch - 1, config);
    rec.train_loss = trainable.train_epoch(epoch, rec.lr);
    rec.val_loss = trainable.validation_loss();
    result.curve.push_back(rec);
    result.epochs_run = epoch;
    if (rec.val_loss < best - config.min_delta) {
      best = rec.val_loss;
      result.best_epoch = epoch;
      trainable.keep_best(epoch);
    }
    if (on_epoch) on_epoch(rec);
    if (epoch - result.best_epoch >= config.patience) break;
    if (config.time_budget_s > 0.0 && clock.seconds() >= config.time_budget_s) {
      result.time_limited = epoch < config.max_epochs;
      break;
    }
  }
  if (result.best_epoch == 0) {
    throw NumericalError("validation loss never became finite");
  }
  return result;
}

namespace {

class ModelTrainable final : public FoldTrainable {
 public:
  ModelTrainable(std::uint64_t seed, const FoldData& data, const TrainConfig& config)
      : data_(data),
        config_(config),
        model_(model_spec_for(config), seed),
        optimizer_(model_.parameters(), {config.beta1, config.beta2, config.eps, config.weight_decay}),
        shuffle_rng_(derive_seed(seed, 0x5bu)) {
    order_.resize(data.train.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
  }

  double train_epoch(int epoch, double lr) override {
    model_.set_mode(Mode::training);
    shuffle_rng_.shuffle(std::span<std::size_t>(order_));
    const std::size_t n = order_.size();
    double total = 0.0;
    Tensor<float> grad;
    for (std::size_t start = 0, b = 0; start < n; start += config_.batch_size, ++b) {
      const std::size_t m = std::min(config_.batch_size, n - start);
      const LabeledSet batch = subset(data_.train, std::span<const std::size_t>(order_).subspan(start, m));
      model_.zero_grad();
      const Tensor<float> probs = model_.forward(batch.x);
      const double loss = kl_loss_and_grad(probs, batch.y, grad);
      if (!std::isfinite(loss)) {
        throw NumericalError(fmt::format("non-finite training loss at epoch {}, batch {}, lr {:g}", epoch, b, lr));
      }
      model_.backward(grad);
      optimizer_.step(lr);
      total += loss * static_cast<double>(m);
    }
    model_.set_mode(Mode::evaluation);
    return total / static_cast<double>(n);
  }

  double validation_loss() override {
    const ProbRows p = predict_probs(model_, data_.val.x);
    const double v = kl_loss_unchecked(p, data_.val.y);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  }

  void keep_best(int) override { best_ = model_.named_weights(); }

  ModelInstance finish() {
    model_.load_weights(best_);
    model_.set_mode(Mode::evaluation);
    return std::move(model_);
  }

  std::size_t parameter_count() const { return model_.parameter_count(); }

 private:
  static double kl_loss_unchecked(const ProbRows& pred, const ProbRows& target) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
      const double t = target.data()[i];
      if (t > 0.0) total += t * (std::log(t) - std::log(std::max(pred.data()[i], kProbFloor)));
    }
    return total / static_cast<double>(pred.rows());
  }

  const FoldData& data_;
  const TrainConfig& config_;
  ModelInstance model_;
  AdamW<float> optimizer_;
  Rng shuffle_rng_;
  std::vector<std::size_t> order_;
  std::vector<NamedArray> best_;
};

}  // namespace

TrainedFold train_one_fold(std::uint64_t model_seed, const FoldData& data, const TrainConfig& config,
                           const EpochCallback& on_epoch) {
  config.validate();
  if (data.train.size() == 0 || data.val.size() == 0) throw DataError("train_one_fold: empty train or validation set");
  Stopwatch clock;
  ModelTrainable trainable(model_seed, data, config);
  FoldResult result = run_epochs(trainable, config, on_epoch);
  result.resources.parameter_count = trainable.parameter_count();
  ModelInstance model = trainable.finish();
  result.resources.wall_clock_s = clock.seconds();
  result.resources.peak_memory_bytes = peak_memory_bytes();
  result.resources.epochs_run = result.epochs_run;
  return {std::move(result), std::move(model)};
}

std::vector<TrainedFold> cross_validate(const LabeledSet& pool, const TrainConfig& config,
                                        const EpochCallback& on_epoch) {
  config.validate();
  const auto folds = stratified_folds(pool.labels(), config.folds, config.seed);
  std::vector<TrainedFold> out;
  out.reserve(folds.size());
  for (std::size_t i = 0; i < folds.size(); ++i) {
    try {
      TrainedFold f = train_one_fold(derive_seed(config.seed, i), fold_data(pool, folds, i), config, on_epoch);
      f.result.fold_index = static_cast<int>(i);
      out.push_back(std::move(f));
    } catch (const Error& e) {
      throw Error(fmt::format("fold {}: {}", i, e.what()));
    }
  }
  return out;
}

}  // namespace qdbench
