// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "CLI11.hpp"

#include "qdbench/config.hpp"
#include "qdbench/data.hpp"
#include "qdbench/dataset_io.hpp"
#include "qdbench/error.hpp"
#include "qdbench/report.hpp"
#include "qdbench/runner.hpp"
#include "qdbench/synth.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <iostream>

using namespace qdbench;

namespace {

int print_config_errors(const ConfigResult& r) {
  for (const auto& e : r.errors) {
    std::cerr << "config error: " << (e.path.empty() ? "<document>" : e.path) << ": " << e.message << "\n";
  }
  return kExitConfig;
}

int cmd_synth(int n, std::uint64_t seed, const std::string& out, int patches_per_record, int grid_size) {
  std::vector<DatasetItem> items;
  for (int i = 0; i < n; ++i) {
    SynthParams p = default_params(derive_seed(seed, static_cast<std::uint64_t>(i)));
    p.grid_size = grid_size;
    CSDRecord record = generate_csd(p);
    if (patches_per_record > 0) {
      for (auto& patch : extract_patches(record, patches_per_record, derive_seed(p.seed, 0x9a7c4))) {
        items.emplace_back(std::move(patch));
      }
    }
    items.emplace_back(std::move(record));
  }
  save_dataset(out, items);
  std::cout << fmt::format("wrote {} records and {} patches to {}\n", n, n * patches_per_record, out);
  return kExitOk;
}

int cmd_validate(const std::string& file) {
  const ConfigResult r = validate_config_file(file);
  if (!r.config) return print_config_errors(r);
  std::cout << to_yaml(*r.config);
  return kExitOk;
}

int cmd_run(const std::string& file, bool resume, bool overwrite, int workers) {
  const ConfigResult r = validate_config_file(file);
  if (!r.config) return print_config_errors(r);
  RunOptions opt;
  opt.resume = resume;
  opt.overwrite = overwrite;
  if (workers > 0) opt.workers = workers;
  const RunSummary s = run_experiment(*r.config, opt);
  std::cout << fmt::format("run {}: {} of {} cells complete, {} failed ({} folds trained, {} reused)\n",
                           s.run_dir.string(), s.cells_completed, s.cells_total, s.cells_failed, s.folds_trained,
                           s.folds_reused);
  for (const auto& f : s.failures) {
    std::cerr << fmt::format("failed: {} fold {}: {}\n", f.cell, f.fold, f.error);
  }
  return s.exit_code;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& data, int bins) {
  const MetricsReport m = evaluate_checkpoint(checkpoint, data, bins);
  nlohmann::json j;
  j["n_samples"] = m.n_samples;
  j["mse_score"] = m.mse_score;
  j["accuracy"] = m.accuracy;
  j["confusion"] = m.confusion;
  nlohmann::json cal = nlohmann::json::array();
  for (const auto& b : m.calibration) {
    cal.push_back({{"center", b.center}, {"mean_conf", b.mean_confidence}, {"obs_frac", b.observed_fraction},
                   {"count", b.count}});
  }
  j["calibration"] = cal;
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_report(const std::string& run) {
  const ReportResult r = write_report(run);
  for (const auto& f : r.files) std::cout << f.string() << "\n";
  for (const auto& m : r.missing_cells) std::cerr << "missing cell: " << m << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qdbench: charge-stability-diagram state recognition benchmark"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")->capture_default_str();

  auto* synth = app.add_subcommand("synth", "generate synthetic charge-stability diagrams");
  int n = 0, per_record = 0, grid = 250;
  std::uint64_t seed = 0;
  std::string out;
  synth->add_option("--n", n, "number of records")->required()->check(CLI::Range(1, 1000000));
  synth->add_option("--seed", seed, "master seed")->capture_default_str();
  synth->add_option("--out", out, "output dataset directory")->required();
  synth->add_option("--patches-per-record", per_record, "also cut this many 30x30 patches per record")
      ->capture_default_str()
      ->check(CLI::Range(0, 100000));
  synth->add_option("--grid-size", grid, "pixels per axis")->capture_default_str()->check(CLI::Range(30, 4096));

  auto* validate = app.add_subcommand("validate", "check an experiment config and print it resolved");
  std::string config;
  validate->add_option("--config", config, "YAML config")->required();

  auto* run = app.add_subcommand("run", "train and evaluate every cell of an experiment");
  bool resume = false, overwrite = false;
  int workers = 0;
  run->add_option("--config", config, "YAML config")->required();
  run->add_flag("--resume", resume, "skip completed cells and folds");
  run->add_flag("--overwrite", overwrite, "replace an existing run directory");
  run->add_option("--workers", workers, "concurrent fold jobs (default: config value)")->check(CLI::Range(1, 1024));

  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on a dataset directory");
  std::string checkpoint, data;
  int bins = 10;
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint.bin")->required();
  evaluate->add_option("--data", data, "dataset directory")->required();
  evaluate->add_option("--bins", bins, "calibration bins")->capture_default_str()->check(CLI::Range(2, 1000));

  auto* report = app.add_subcommand("report", "render plots and summaries from a run directory");
  std::string run_dir;
  report->add_option("--run", run_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }
  if (resume && overwrite) {
    std::cerr << "--resume and --overwrite are mutually exclusive\n";
    return kExitConfig;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*synth) return cmd_synth(n, seed, out, per_record, grid);
    if (*validate) return cmd_validate(config);
    if (*run) return cmd_run(config, resume, overwrite, workers);
    if (*evaluate) return cmd_evaluate(checkpoint, data, bins);
    if (*report) return cmd_report(run_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParameterError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitOk;
}
