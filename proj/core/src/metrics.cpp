// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "qdbench/metrics.hpp"

#include "qdbench/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace qdbench {

bool operator==(const CalibrationBin& a, const CalibrationBin& b) {
  return a.center == b.center && a.mean_confidence == b.mean_confidence &&
         a.observed_fraction == b.observed_fraction && a.count == b.count;
}

ProbRows to_prob_rows(const Tensor<float>& probs) {
  if (probs.rank() != 2 || probs.dim(1) != kNumStates) {
    throw ValidationError("expected N x 5 probabilities, got " + shape_string(probs.shape()));
  }
  ProbRows out(static_cast<Eigen::Index>(probs.dim(0)), kNumStates);
  for (std::size_t i = 0; i < probs.size(); ++i) out.data()[i] = probs[i];
  return out;
}

namespace {

void check_pair(const ProbRows& pred, const ProbRows& target, const char* where) {
  if (pred.rows() != target.rows()) {
    throw ValidationError(fmt::format("{}: {} prediction rows vs {} target rows", where, pred.rows(),
                                      target.rows()));
  }
  if (pred.rows() == 0) throw ValidationError(std::string(where) + ": empty input");
  for (Eigen::Index r = 0; r < pred.rows(); ++r) {
    for (const ProbRows* m : {&pred, &target}) {
      const double s = m->row(r).sum();
      if (!(std::abs(s - 1.0) <= 1e-4)) {
        throw ValidationError(fmt::format("{}: {} row {} sums to {}", where, m == &pred ? "prediction" : "target",
                                          r, s));
      }
    }
  }
}

}  // namespace

double mse_score(const ProbRows& pred, const ProbRows& target) {
  check_pair(pred, target, "mse_score");
  return 1.0 - (pred - target).array().square().mean();
}

double accuracy(const ProbRows& pred, const ProbRows& target) {
  check_pair(pred, target, "accuracy");
  std::size_t hits = 0;
  for (Eigen::Index r = 0; r < pred.rows(); ++r) {
    hits += argmax_state(pred.row(r)) == argmax_state(target.row(r));
  }
  return static_cast<double>(hits) / static_cast<double>(pred.rows());
}

ConfusionMatrix confusion_matrix(const ProbRows& pred, const ProbRows& target) {
  check_pair(pred, target, "confusion_matrix");
  ConfusionMatrix m{};
  for (Eigen::Index r = 0; r < pred.rows(); ++r) {
    ++m[argmax_state(target.row(r))][argmax_state(pred.row(r))];
  }
  return m;
}

std::vector<CalibrationBin> calibration_curve(const ProbRows& pred, const ProbRows& target, int bins) {
  if (bins < 2) throw ValidationError(fmt::format("calibration_curve: bins must be >= 2, got {}", bins));
  check_pair(pred, target, "calibration_curve");
  std::vector<CalibrationBin> out(static_cast<std::size_t>(bins));
  std::vector<double> conf(out.size(), 0.0), obs(out.size(), 0.0);
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double p = pred.data()[i];
    const auto b = static_cast<std::size_t>(
        std::clamp(static_cast<long>(std::floor(p * bins)), 0L, static_cast<long>(bins - 1)));
    conf[b] += p;
    obs[b] += target.data()[i];
    ++out[b].count;
  }
  for (std::size_t b = 0; b < out.size(); ++b) {
    out[b].center = (static_cast<double>(b) + 0.5) / bins;
    if (out[b].count > 0) {
      out[b].mean_confidence = conf[b] / static_cast<double>(out[b].count);
      out[b].observed_fraction = obs[b] / static_cast<double>(out[b].count);
    }
  }
  return out;
}

MetricsReport evaluate_predictions(const ProbRows& pred, const ProbRows& target, int calibration_bins) {
  MetricsReport r;
  r.mse_score = mse_score(pred, target);
  r.accuracy = accuracy(pred, target);
  r.confusion = confusion_matrix(pred, target);
  r.calibration = calibration_curve(pred, target, calibration_bins);
  r.n_samples = static_cast<std::size_t>(pred.rows());
  return r;
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ValidationError("quantile of empty input");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Summary summarize(std::span<const double> values) {
  if (values.empty()) throw ValidationError("aggregation over an empty set");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  Summary s;
  s.n = v.size();
  s.min = v.front();
  s.max = v.back();
  s.q1 = quantile_sorted(v, 0.25);
  s.median = quantile_sorted(v, 0.5);
  s.q3 = quantile_sorted(v, 0.75);
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

std::map<std::string, Summary> aggregate_folds(const std::vector<FoldMetrics>& folds) {
  if (folds.empty()) throw ValidationError("aggregate_folds: no fold results");
  std::map<std::string, std::vector<double>> columns;
  for (const auto& f : folds) {
    columns["mse_score"].push_back(f.metrics.mse_score);
    columns["accuracy"].push_back(f.metrics.accuracy);
    columns["best_epoch"].push_back(f.best_epoch);
    columns["epochs_run"].push_back(f.epochs_run);
    columns["wall_clock_s"].push_back(f.wall_clock_s);
    columns["peak_memory_bytes"].push_back(static_cast<double>(f.peak_memory_bytes));
  }
  std::map<std::string, Summary> out;
  for (const auto& [name, values] : columns) out[name] = summarize(values);
  return out;
}

std::string summary_csv(const std::map<std::string, Summary>& summaries) {
  std::string out = "metric,n,min,q1,median,q3,max,mean,std\n";
  for (const auto& [name, s] : summaries) {
    out += fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", name, s.n, s.min, s.q1,
                       s.median, s.q3, s.max, s.mean, s.std);
  }
  return out;
}

std::string confusion_csv(const std::vector<FoldMetrics>& folds) {
  std::string out = "fold,true,pred,count\n";
  for (const auto& f : folds) {
    for (int t = 0; t < kNumStates; ++t) {
      for (int p = 0; p < kNumStates; ++p) {
        out += fmt::format("{},{},{},{}\n", f.fold, kStateNames[t], kStateNames[p], f.metrics.confusion[t][p]);
      }
    }
  }
  return out;
}

std::string calibration_csv(const std::vector<FoldMetrics>& folds) {
  std::string out = "fold,bin,mean_conf,obs_frac,count\n";
  for (const auto& f : folds) {
    for (std::size_t b = 0; b < f.metrics.calibration.size(); ++b) {
      const auto& c = f.metrics.calibration[b];
      out += fmt::format("{},{},{:.17g},{:.17g},{}\n", f.fold, b, c.mean_confidence, c.observed_fraction, c.count);
    }
  }
  return out;
}

}  // namespace qdbench
