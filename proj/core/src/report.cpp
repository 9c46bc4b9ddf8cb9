// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "qdbench/report.hpp"

#include "qdbench/cells.hpp"
#include "qdbench/config.hpp"
#include "qdbench/error.hpp"
#include "qdbench/fsutil.hpp"
#include "qdbench/metrics.hpp"
#include "qdbench/plot.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace fs = std::filesystem;

namespace qdbench {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

struct CellRows {
  std::string family, normalization;
  double budget = 0;
  std::vector<double> epochs, mse;
};

std::optional<CellRows> read_cell(const fs::path& csv) {
  std::istringstream in(read_file(csv));
  std::string line;
  if (!std::getline(in, line)) return std::nullopt;
  const auto header = split(line);
  const auto col = [&](std::string_view name) -> int {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  };
  const int ifam = col("family"), inorm = col("normalization"), ibud = col("budget"), iep = col("epochs_run"),
            imse = col("mse_score");
  if (std::min({ifam, inorm, ibud, iep, imse}) < 0) return std::nullopt;
  CellRows rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != header.size()) return std::nullopt;
    rows.family = f[ifam];
    rows.normalization = f[inorm];
    rows.budget = std::stod(f[ibud]);
    rows.epochs.push_back(std::stod(f[iep]));
    rows.mse.push_back(std::stod(f[imse]));
  }
  if (rows.epochs.empty()) return std::nullopt;
  return rows;
}

int family_rank(const std::string& name) {
  const auto f = parse_family(name);
  return f ? static_cast<int>(*f) : 99;
}

}  // namespace

ReportResult write_report(const fs::path& run_dir) {
  if (!fs::is_directory(run_dir)) throw IoError("run directory '" + run_dir.string() + "' does not exist");
  ReportResult result;

  std::set<std::string> expected;
  if (fs::exists(run_dir / "config.resolved.yaml")) {
    const auto parsed = validate_config(read_file(run_dir / "config.resolved.yaml"));
    if (parsed.config) {
      for (const auto& cell : enumerate_cells(*parsed.config)) expected.insert(cell.name());
    } else {
      spdlog::warn("report: config.resolved.yaml does not validate; using cells/ contents only");
    }
  }
  std::set<std::string> present;
  if (fs::is_directory(run_dir / "cells")) {
    for (const auto& entry : fs::directory_iterator(run_dir / "cells")) {
      if (entry.is_directory()) present.insert(entry.path().filename().string());
    }
  }
  expected.insert(present.begin(), present.end());

  std::vector<CellRows> cells;
  for (const auto& name : expected) {
    const fs::path csv = run_dir / "cells" / name / "aggregate" / "metrics.csv";
    std::optional<CellRows> rows;
    if (fs::exists(csv)) {
      try {
        rows = read_cell(csv);
      } catch (const std::exception& e) {
        spdlog::warn("report: cannot parse {}: {}", csv.string(), e.what());
      }
    }
    if (rows) cells.push_back(std::move(*rows));
    else result.missing_cells.push_back(name);
  }
  std::sort(cells.begin(), cells.end(), [](const CellRows& a, const CellRows& b) {
    return std::make_tuple(a.normalization, family_rank(a.family), a.budget) <
           std::make_tuple(b.normalization, family_rank(b.family), b.budget);
  });

  const fs::path out = run_dir / "report";
  fs::create_directories(out);
  std::string epochs_csv = "family,normalization,budget,min,q1,median,q3,max\n";
  std::string mse_csv = "test_set,family,normalization,budget,min,q1,median,q3,max,mean,std,n\n";
  std::map<std::string, std::vector<BoxGroup>> epoch_groups, mse_groups;
  for (const auto& c : cells) {
    const Summary e = summarize(c.epochs);
    const Summary m = summarize(c.mse);
    epochs_csv += fmt::format("{},{},{:.2f},{},{},{},{},{}\n", c.family, c.normalization, c.budget, e.min, e.q1,
                              e.median, e.q3, e.max);
    mse_csv += fmt::format("synthetic,{},{},{:.2f},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{}\n",
                           c.family, c.normalization, c.budget, m.min, m.q1, m.median, m.q3, m.max, m.mean, m.std,
                           m.n);
    const std::string label = fmt::format("{}\n{:.0f}%", c.family, c.budget * 100);
    epoch_groups[c.normalization].push_back({label, e});
    mse_groups[c.normalization].push_back({label, m});
  }
  write_file_atomic(out / "epochs_summary.csv", epochs_csv);
  write_file_atomic(out / "mse_summary.csv", mse_csv);
  result.files.push_back("report/epochs_summary.csv");
  result.files.push_back("report/mse_summary.csv");
  for (const auto& [norm, groups] : epoch_groups) {
    const std::string name = fmt::format("epochs_{}.png", norm);
    render_box_plot(out / name, fmt::format("EPOCHS RUN ({})", norm), "EPOCHS", groups);
    result.files.push_back(fs::path("report") / name);
  }
  for (const auto& [norm, groups] : mse_groups) {
    const std::string name = fmt::format("mse_test_{}.png", norm);
    render_box_plot(out / name, fmt::format("TEST MSE SCORE ({})", norm), "MSE SCORE", groups);
    result.files.push_back(fs::path("report") / name);
  }
  if (!result.missing_cells.empty()) {
    std::string txt;
    for (const auto& m : result.missing_cells) txt += m + "\n";
    write_file_atomic(out / "missing_cells.txt", txt);
    result.files.push_back("report/missing_cells.txt");
  } else if (fs::exists(out / "missing_cells.txt")) {
    fs::remove(out / "missing_cells.txt");
  }
  return result;
}

}  // namespace qdbench
