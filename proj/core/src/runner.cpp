// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "qdbench/runner.hpp"

#include "qdbench/checkpoint.hpp"
#include "qdbench/dataset_io.hpp"
#include "qdbench/error.hpp"
#include "qdbench/fsutil.hpp"
#include "qdbench/metrics.hpp"
#include "qdbench/provenance.hpp"
#include "qdbench/report.hpp"
#include "qdbench/synth.hpp"
#include "qdbench/training.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <atomic>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;

namespace qdbench {

std::string metrics_csv_header() {
  return "fold,budget,normalization,family,mse_score,accuracy,best_epoch,epochs_run,wall_clock_s,peak_memory_bytes,"
         "params\n";
}

std::vector<Patch> prepare_patches(const ExperimentConfig& config) {
  const int per_record = config.data.patches_per_record;
  std::vector<Patch> patches;
  if (config.data.source == DataSource::synth) {
    for (int d = 0; d < config.data.devices; ++d) {
      SynthParams device = default_params(derive_seed(config.seed, 0x10000u + static_cast<unsigned>(d)));
      device.grid_size = config.data.grid_size;
      for (int r = 0; r < config.data.noise_realizations; ++r) {
        SynthParams p = device;
        p.seed = derive_seed(device.seed, static_cast<std::uint64_t>(r));
        const CSDRecord record = generate_csd(p);
        auto cut = extract_patches(record, per_record, derive_seed(p.seed, 0x9a7c4));
        patches.insert(patches.end(), std::make_move_iterator(cut.begin()), std::make_move_iterator(cut.end()));
      }
    }
    return patches;
  }
  const auto items = load_dataset(config.data.path);
  patches = patches_of(items);
  const auto records = records_of(items);
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto cut = extract_patches(records[i], per_record, derive_seed(config.seed, 0x20000u + i));
    patches.insert(patches.end(), std::make_move_iterator(cut.begin()), std::make_move_iterator(cut.end()));
  }
  if (patches.empty()) throw DataError("dataset '" + config.data.path.string() + "' holds no patches or records");
  return patches;
}

MetricsReport evaluate_checkpoint(const fs::path& checkpoint, const fs::path& data_dir, int calibration_bins,
                                  int patches_per_record, std::uint64_t seed) {
  const LoadedCheckpoint ck = load_checkpoint(checkpoint);
  ExperimentConfig c;
  c.data.source = DataSource::dataset;
  c.data.path = data_dir;
  c.data.patches_per_record = patches_per_record;
  c.seed = seed;
  const std::vector<Patch> patches = prepare_patches(c);
  std::vector<std::size_t> all(patches.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const LabeledSet set = make_labeled_set(patches, all, {ck.meta.normalization});
  return evaluate_predictions(predict_probs(ck.model, set.x), set.y, calibration_bins);
}

namespace {

json report_to_json(const MetricsReport& r) {
  json cal = json::array();
  for (const auto& b : r.calibration) {
    cal.push_back({{"center", b.center}, {"mean_conf", b.mean_confidence}, {"obs_frac", b.observed_fraction},
                   {"count", b.count}});
  }
  return {{"mse_score", r.mse_score}, {"accuracy", r.accuracy}, {"n_samples", r.n_samples},
          {"confusion", r.confusion}, {"calibration", cal}};
}

MetricsReport report_from_json(const json& j) {
  MetricsReport r;
  r.mse_score = j.at("mse_score").get<double>();
  r.accuracy = j.at("accuracy").get<double>();
  r.n_samples = j.at("n_samples").get<std::size_t>();
  r.confusion = j.at("confusion").get<ConfusionMatrix>();
  for (const auto& b : j.at("calibration")) {
    r.calibration.push_back({b.at("center").get<double>(), b.at("mean_conf").get<double>(),
                             b.at("obs_frac").get<double>(), b.at("count").get<std::size_t>()});
  }
  return r;
}

std::string curves_csv(const std::vector<EpochRecord>& curve) {
  std::string out = "epoch,lr,train_loss,val_loss\n";
  for (const auto& e : curve) {
    out += fmt::format("{},{:.17g},{:.17g},{:.17g}\n", e.epoch, e.lr, e.train_loss, e.val_loss);
  }
  return out;
}

struct CellState {
  Cell cell;
  fs::path dir;
  bool skip = false;  ///< already complete
  std::vector<std::optional<FoldMetrics>> folds;
  std::atomic<int> remaining{0};
  bool finished = false;
  std::mutex mu;
  std::vector<CellFailure> failures;
};

struct Job {
  std::size_t cell;
  int fold;
};

std::optional<FoldMetrics> reuse_fold(const fs::path& dir) {
  if (!fs::exists(dir / "metrics.json") || !fs::exists(dir / "checkpoint.bin") || !fs::exists(dir / "curves.csv")) {
    return std::nullopt;
  }
  try {
    const json j = json::parse(read_file(dir / "metrics.json"));
    FoldMetrics f;
    f.fold = j.at("fold").get<int>();
    f.best_epoch = j.at("best_epoch").get<int>();
    f.epochs_run = j.at("epochs_run").get<int>();
    f.wall_clock_s = j.at("resources").at("wall_clock_s").get<double>();
    f.peak_memory_bytes = j.at("resources").at("peak_memory_bytes").get<std::size_t>();
    f.parameter_count = j.at("resources").at("parameter_count").get<std::size_t>();
    f.metrics = report_from_json(j.at("test"));
    return f;
  } catch (const std::exception& e) {
    spdlog::warn("{}: cannot reuse fold ({}); retraining", dir.string(), e.what());
    return std::nullopt;
  }
}

void write_aggregate(CellState& s) {
  std::vector<FoldMetrics> folds;
  for (const auto& f : s.folds) folds.push_back(*f);
  std::string csv = metrics_csv_header();
  for (const auto& f : folds) {
    csv += fmt::format("{},{:.2f},{},{},{:.17g},{:.17g},{},{},{:.3f},{},{}\n", f.fold, s.cell.budget,
                       to_string(s.cell.normalization), to_string(s.cell.family), f.metrics.mse_score,
                       f.metrics.accuracy, f.best_epoch, f.epochs_run, f.wall_clock_s, f.peak_memory_bytes,
                       f.parameter_count);
  }
  const fs::path agg = s.dir / "aggregate";
  write_file_atomic(agg / "metrics.csv", csv);
  write_file_atomic(agg / "confusion.csv", confusion_csv(folds));
  write_file_atomic(agg / "calibration.csv", calibration_csv(folds));
  write_file_atomic(agg / "summary.csv", summary_csv(aggregate_folds(folds)));
}

void write_cell_manifest(const CellState& s, const std::string& status) {
  json folds = json::array();
  for (std::size_t k = 0; k < s.folds.size(); ++k) {
    const std::string base = fmt::format("folds/fold_{}/", k);
    folds.push_back({{"fold", k},
                     {"done", s.folds[k].has_value()},
                     {"checkpoint", base + "checkpoint.bin"},
                     {"metrics", base + "metrics.json"},
                     {"curves", base + "curves.csv"}});
  }
  json errors = json::array();
  for (const auto& f : s.failures) errors.push_back({{"fold", f.fold}, {"error", f.error}});
  json j = {{"cell", s.cell.name()},
            {"family", std::string(to_string(s.cell.family))},
            {"budget", s.cell.budget},
            {"normalization", std::string(to_string(s.cell.normalization))},
            {"status", status},
            {"folds", folds},
            {"errors", errors}};
  if (status == "complete") {
    j["aggregate"] = {"aggregate/metrics.csv", "aggregate/confusion.csv", "aggregate/calibration.csv",
                      "aggregate/summary.csv"};
  }
  write_file_atomic(s.dir / "cell.json", j.dump(2) + "\n");
}

bool cell_complete(const fs::path& dir) {
  if (!fs::exists(dir / "cell.json")) return false;
  try {
    const json j = json::parse(read_file(dir / "cell.json"));
    return j.at("status") == "complete" && fs::exists(dir / "aggregate" / "metrics.csv");
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  RunSummary summary;
  const fs::path run_dir = config.output_root / config.experiment_id;
  summary.run_dir = run_dir;
  const std::string resolved = to_yaml(config);

  bool fresh = true;
  if (fs::exists(run_dir) && !fs::is_empty(run_dir)) {
    if (options.overwrite) {
      spdlog::info("removing existing run directory {}", run_dir.string());
      fs::remove_all(run_dir);
    } else if (options.resume) {
      if (!fs::exists(run_dir / "config.resolved.yaml") ||
          sha256_hex(read_file(run_dir / "config.resolved.yaml")) != sha256_hex(resolved)) {
        throw ConfigError("cannot resume: " + run_dir.string() + " was produced by a different config");
      }
      fresh = false;
    } else {
      throw ConfigError("run directory " + run_dir.string() + " is not empty; pass --resume or --overwrite");
    }
  }
  try {
    fs::create_directories(run_dir / "cells");
  } catch (const fs::filesystem_error& e) {
    throw IoError(std::string("cannot create run directory: ") + e.what());
  }
  if (fresh) {
    write_file_atomic(run_dir / "config.resolved.yaml", resolved);
    write_file_atomic(run_dir / "provenance.json", provenance_json(config, resolved));
  }

  const std::vector<Patch> patches = prepare_patches(config);
  if (config.data.test_count >= patches.size()) {
    throw ConfigError(fmt::format("data.test_count {} leaves no training pool among {} patches",
                                  config.data.test_count, patches.size()));
  }
  spdlog::info("{} patches ({} held out for testing)", patches.size(), config.data.test_count);

  std::vector<std::size_t> all(patches.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::map<NormalizationKind, LabeledSet> normalized;
  for (auto n : config.normalizations) normalized[n] = make_labeled_set(patches, all, {n});
  struct BudgetData {
    DatasetSplit split;
    std::vector<std::vector<std::size_t>> folds;
    std::string error;
  };
  std::map<double, BudgetData> budgets;
  for (double b : config.budgets) {
    BudgetData bd;
    bd.split = make_splits(patches.size(), config.data.test_count, b, config.seed);
    try {
      std::vector<LabelVector> labels;
      for (std::size_t i : bd.split.pool_ids) labels.push_back(patches[i].label);
      bd.folds = stratified_folds(labels, config.folds, config.seed);
    } catch (const Error& e) {
      bd.error = e.what();
    }
    budgets[b] = std::move(bd);
  }
  std::map<std::pair<double, NormalizationKind>, LabeledSet> pools;
  std::map<NormalizationKind, LabeledSet> tests;
  for (auto n : config.normalizations) {
    tests[n] = subset(normalized[n], budgets.begin()->second.split.test_ids);
    for (double b : config.budgets) pools[{b, n}] = subset(normalized[n], budgets[b].split.pool_ids);
  }
  normalized.clear();

  const std::vector<Cell> cells = enumerate_cells(config);
  std::vector<std::unique_ptr<CellState>> states;
  std::vector<Job> jobs;
  for (const Cell& cell : cells) {
    auto s = std::make_unique<CellState>();
    s->cell = cell;
    s->dir = run_dir / "cells" / cell.name();
    s->folds.resize(static_cast<std::size_t>(config.folds));
    if (!fresh && cell_complete(s->dir)) {
      s->skip = true;
      spdlog::info("{}: complete, skipped", cell.name());
    } else if (!budgets[cell.budget].error.empty()) {
      s->failures.push_back({cell.name(), -1, budgets[cell.budget].error});
    } else {
      for (int k = 0; k < config.folds; ++k) {
        if (!fresh) {
          if (auto f = reuse_fold(s->dir / "folds" / fmt::format("fold_{}", k))) {
            s->folds[k] = std::move(f);
            ++summary.folds_reused;
            continue;
          }
        }
        jobs.push_back({states.size(), k});
        ++s->remaining;
      }
    }
    states.push_back(std::move(s));
  }

  std::mutex summary_mu;
  const auto finish_cell = [&](CellState& s) {
    s.finished = true;
    try {
      if (s.failures.empty()) {
        write_aggregate(s);
        write_cell_manifest(s, "complete");
        spdlog::info("{}: aggregated", s.cell.name());
      } else {
        write_cell_manifest(s, "failed");
      }
    } catch (const std::exception& e) {
      std::lock_guard lock(s.mu);
      s.failures.push_back({s.cell.name(), -1, std::string("aggregation: ") + e.what()});
      try {
        write_cell_manifest(s, "failed");
      } catch (const std::exception&) {
      }
    }
  };

  const auto run_job = [&](const Job& job) {
    CellState& s = *states[job.cell];
    const fs::path dir = s.dir / "folds" / fmt::format("fold_{}", job.fold);
    try {
      const TrainConfig tc = config.train_config(s.cell.family, s.cell.budget, s.cell.normalization);
      const auto& pool = pools.at({s.cell.budget, s.cell.normalization});
      const auto& test = tests.at(s.cell.normalization);
      const FoldData data = fold_data(pool, budgets.at(s.cell.budget).folds, static_cast<std::size_t>(job.fold));
      const std::string tag = fmt::format("{} fold {}", s.cell.name(), job.fold);
      TrainedFold trained = train_one_fold(derive_seed(config.seed, static_cast<std::uint64_t>(job.fold)), data, tc,
                                           [&](const EpochRecord& e) {
                                             spdlog::debug("{} epoch {} lr {:.3g} train {:.5f} val {:.5f}", tag,
                                                           e.epoch, e.lr, e.train_loss, e.val_loss);
                                           });
      trained.result.fold_index = job.fold;
      trained.result.checkpoint = (dir / "checkpoint.bin").lexically_relative(s.dir).string();
      const MetricsReport report = evaluate_predictions(predict_probs(trained.model, test.x), test.y,
                                                        config.calibration_bins);
      const double best_val = trained.result.curve[trained.result.best_epoch - 1].val_loss;

      CheckpointMeta meta;
      meta.epoch = trained.result.best_epoch;
      meta.normalization = s.cell.normalization;
      meta.metrics = {{"val_loss", best_val}, {"test_mse_score", report.mse_score}, {"test_accuracy", report.accuracy}};
      save_checkpoint(dir / "checkpoint.bin", trained.model, meta);
      write_file_atomic(dir / "curves.csv", curves_csv(trained.result.curve));
      const auto& r = trained.result;
      json mj = {{"fold", job.fold},
                 {"cell", s.cell.name()},
                 {"model_seed", derive_seed(config.seed, static_cast<std::uint64_t>(job.fold))},
                 {"best_epoch", r.best_epoch},
                 {"epochs_run", r.epochs_run},
                 {"time_limited", r.time_limited},
                 {"best_val_loss", best_val},
                 {"train_size", data.train.size()},
                 {"val_size", data.val.size()},
                 {"checkpoint", "checkpoint.bin"},
                 {"curves", "curves.csv"},
                 {"resources",
                  {{"wall_clock_s", r.resources.wall_clock_s},
                   {"peak_memory_bytes", r.resources.peak_memory_bytes},
                   {"epochs_run", r.resources.epochs_run},
                   {"parameter_count", r.resources.parameter_count}}},
                 {"test", report_to_json(report)}};
      write_file_atomic(dir / "metrics.json", mj.dump(2) + "\n");

      FoldMetrics fm;
      fm.fold = job.fold;
      fm.metrics = report;
      fm.best_epoch = r.best_epoch;
      fm.epochs_run = r.epochs_run;
      fm.wall_clock_s = r.resources.wall_clock_s;
      fm.peak_memory_bytes = r.resources.peak_memory_bytes;
      fm.parameter_count = r.resources.parameter_count;
      {
        std::lock_guard lock(s.mu);
        s.folds[job.fold] = std::move(fm);
      }
      {
        std::lock_guard lock(summary_mu);
        ++summary.folds_trained;
      }
      spdlog::info("{}: best epoch {} of {}, test MSE score {:.4f}, accuracy {:.4f} ({:.1f}s)", tag, r.best_epoch,
                   r.epochs_run, report.mse_score, report.accuracy, r.resources.wall_clock_s);
    } catch (const std::exception& e) {
      spdlog::error("{} fold {} failed: {}", s.cell.name(), job.fold, e.what());
      std::lock_guard lock(s.mu);
      s.failures.push_back({s.cell.name(), job.fold, e.what()});
    }
    if (--s.remaining == 0) finish_cell(s);
  };

  const int workers = std::max(1, std::min<int>(options.workers.value_or(config.workers),
                                                static_cast<int>(std::max<std::size_t>(jobs.size(), 1))));
  spdlog::info("{} cells, {} fold jobs on {} worker(s)", cells.size(), jobs.size(), workers);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) run_job(jobs[i]);
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // cells with nothing left to train (all folds reused, or failed at setup)
  for (auto& s : states) {
    if (!s->skip && !s->finished) finish_cell(*s);
  }

  json failures = json::array();
  for (const auto& s : states) {
    ++summary.cells_total;
    if (s->failures.empty()) {
      ++summary.cells_completed;
    } else {
      ++summary.cells_failed;
      for (const auto& f : s->failures) {
        summary.failures.push_back(f);
        json item = {{"cell", f.cell}, {"error", f.error}};
        item["fold"] = f.fold >= 0 ? json(f.fold) : json(nullptr);
        failures.push_back(item);
      }
    }
  }
  write_file_atomic(run_dir / "failures.json", failures.dump(2) + "\n");

  try {
    const ReportResult rep = write_report(run_dir);
    for (const auto& m : rep.missing_cells) spdlog::warn("report: no results for cell {}", m);
  } catch (const std::exception& e) {
    spdlog::error("report generation failed: {}", e.what());
    summary.exit_code = kExitIo;
    return summary;
  }
  summary.exit_code = summary.cells_failed > 0 ? kExitPartial : kExitOk;
  return summary;
}

}  // namespace qdbench
