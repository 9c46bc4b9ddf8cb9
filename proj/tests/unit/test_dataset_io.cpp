// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include "qdbench/dataset_io.hpp"
#include "qdbench/error.hpp"
#include "qdbench/fsutil.hpp"
#include "tempdir.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>

using namespace qdbench;
using qdbench::testing::TempDir;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<DatasetItem> sample_items(int n_records, int patches_each) {
  std::vector<DatasetItem> items;
  for (int i = 0; i < n_records; ++i) {
    SynthParams sp = default_params(100 + i);
    sp.grid_size = 60;
    const CSDRecord rec = generate_csd(sp);
    for (auto& p : extract_patches(rec, patches_each, i)) items.emplace_back(std::move(p));
    items.emplace_back(rec);
  }
  return items;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = read_file(e.path());
  return out;
}

json manifest(const fs::path& dir) { return json::parse(read_file(dir / "manifest.json")); }

void write_manifest(const fs::path& dir, const json& m) { write_file_atomic(dir / "manifest.json", m.dump(1)); }

}  // namespace

TEST_CASE("dataset round-trip preserves items") {
  TempDir tmp;
  const auto items = sample_items(2, 3);
  save_dataset(tmp.path(), items);
  const auto loaded = load_dataset(tmp.path());
  REQUIRE(loaded.size() == items.size());
  const auto a = records_of(items), b = records_of(loaded);
  REQUIRE(b.size() == 2);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].record_id == b[i].record_id);
    CHECK(a[i].noise_id == b[i].noise_id);
    CHECK(a[i].signal == b[i].signal);
    CHECK(a[i].state_map == b[i].state_map);
    CHECK(a[i].v1_axis == b[i].v1_axis);
    CHECK(a[i].v2_axis == b[i].v2_axis);
  }
  const auto pa = patches_of(items), pb = patches_of(loaded);
  REQUIRE(pb.size() == 6);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK_FALSE(pb[i].id.empty());
    CHECK(pa[i].pixels == pb[i].pixels);
    CHECK(pa[i].label == pb[i].label);
    CHECK(pa[i].parent_id == pb[i].parent_id);
    CHECK(pa[i].center == pb[i].center);
    CHECK(pa[i].v1_window == pb[i].v1_window);
  }
}

TEST_CASE("save-load-save is byte-identical") {
  TempDir a, b;
  save_dataset(a.path(), sample_items(2, 2));
  save_dataset(b.path(), load_dataset(a.path()));
  CHECK(snapshot(a.path()) == snapshot(b.path()));
}

TEST_CASE("missing item file names the id") {
  TempDir tmp;
  std::vector<DatasetItem> items;
  for (auto& p : extract_patches(generate_csd(default_params(3)), 10, 1)) items.emplace_back(std::move(p));
  save_dataset(tmp.path(), items);
  const json m = manifest(tmp.path());
  REQUIRE(m["items"].size() == 10);
  const std::string victim = m["items"][6]["id"];
  fs::remove(tmp.path() / m["items"][6]["file"].get<std::string>());
  try {
    load_dataset(tmp.path());
    FAIL("expected IngestionError");
  } catch (const IngestionError& e) {
    CHECK(std::string(e.what()).find(victim) != std::string::npos);
  }
}

TEST_CASE("wrong patch shape names the file") {
  TempDir tmp;
  std::vector<DatasetItem> items;
  for (auto& p : extract_patches(generate_csd(default_params(3)), 2, 1)) items.emplace_back(std::move(p));
  save_dataset(tmp.path(), items);
  json m = manifest(tmp.path());
  const std::string file = m["items"][1]["file"];
  m["items"][1]["shape"] = {29, 30};
  write_manifest(tmp.path(), m);
  try {
    load_dataset(tmp.path());
    FAIL("expected IngestionError");
  } catch (const IngestionError& e) {
    CHECK(e.file().find(file) != std::string::npos);
    CHECK(std::string(e.what()).find("29x30") != std::string::npos);
  }

  m["items"][1]["shape"] = {30, 30};
  write_manifest(tmp.path(), m);
  write_file_atomic(tmp.path() / file, std::string(29 * 30 * 8, '\0'));
  try {
    load_dataset(tmp.path());
    FAIL("expected IngestionError");
  } catch (const IngestionError& e) {
    CHECK(e.file().find(file) != std::string::npos);
  }
}

TEST_CASE("malformed manifests are rejected") {
  TempDir tmp;
  CHECK_THROWS_AS(load_dataset(tmp.path()), IngestionError);

  save_dataset(tmp.path(), sample_items(1, 1));
  const json good = manifest(tmp.path());

  write_file_atomic(tmp.path() / "manifest.json", "{not json");
  CHECK_THROWS_AS(load_dataset(tmp.path()), IngestionError);

  json m = good;
  m["schema_version"] = 99;
  write_manifest(tmp.path(), m);
  CHECK_THROWS_AS(load_dataset(tmp.path()), IngestionError);

  m = good;
  m["item_count"] = 7;
  write_manifest(tmp.path(), m);
  CHECK_THROWS_AS(load_dataset(tmp.path()), IngestionError);

  m = good;
  m["items"][0]["label"] = {0.5, 0.6, 0.0, 0.0, 0.0};
  write_manifest(tmp.path(), m);
  CHECK_THROWS_WITH_AS(load_dataset(tmp.path()), doctest::Contains("label"), IngestionError);

  m = good;
  m["items"][0]["label"] = {1.5, -0.5, 0.0, 0.0, 0.0};
  write_manifest(tmp.path(), m);
  CHECK_THROWS_WITH_AS(load_dataset(tmp.path()), doctest::Contains("outside [0, 1]"), IngestionError);

  m = good;
  m["items"][0].erase("label");
  write_manifest(tmp.path(), m);
  CHECK_THROWS_WITH_AS(load_dataset(tmp.path()), doctest::Contains("missing field"), IngestionError);

  m = good;
  m["items"][0]["kind"] = "image";
  write_manifest(tmp.path(), m);
  CHECK_THROWS_AS(load_dataset(tmp.path()), IngestionError);
}

TEST_CASE("out-of-range state labels are rejected") {
  TempDir tmp;
  SynthParams sp;
  sp.grid_size = 30;
  CSDRecord rec = generate_csd(sp);
  save_dataset(tmp.path(), {rec});
  const std::string file = manifest(tmp.path())["items"][0]["file"];
  std::string bytes = read_file(tmp.path() / file);
  bytes[30 * 30 * 8 + 17] = 9;
  write_file_atomic(tmp.path() / file, bytes);
  CHECK_THROWS_WITH_AS(load_dataset(tmp.path()), doctest::Contains("out of range"), IngestionError);
}

TEST_CASE("save rejects unsafe and duplicate ids") {
  TempDir tmp;
  Patch p = extract_patches(generate_csd(SynthParams{}), 1, 0)[0];
  p.id = "../escape";
  CHECK_THROWS_AS(save_dataset(tmp.path(), {p}), IoError);
  p.id = "same";
  CHECK_THROWS_AS(save_dataset(tmp.path(), {p, p}), IoError);
}
