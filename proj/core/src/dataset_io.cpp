// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "qdbench/dataset_io.hpp"

#include "binary_io.hpp"
#include "qdbench/error.hpp"
#include "qdbench/fsutil.hpp"

#include <nlohmann/json.hpp>

#include <set>
#include <string>

namespace qdbench {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string patch_id(const Patch& p, std::size_t index) {
  if (!p.id.empty()) return p.id;
  return p.parent_id + "_r" + std::to_string(p.center[0]) + "c" + std::to_string(p.center[1]) +
         "_i" + std::to_string(index);
}

json record_entry(const CSDRecord& r, const std::string& file) {
  return json{{"id", r.record_id},        {"kind", "record"},
              {"file", file},             {"shape", {r.signal.rows(), r.signal.cols()}},
              {"noise_id", r.noise_id},   {"v1_axis", r.v1_axis},
              {"v2_axis", r.v2_axis}};
}

json patch_entry(const Patch& p, const std::string& id, const std::string& file) {
  return json{{"id", id},
              {"kind", "patch"},
              {"file", file},
              {"shape", {p.pixels.rows(), p.pixels.cols()}},
              {"label", p.label.p},
              {"parent_id", p.parent_id},
              {"center", p.center},
              {"noise_id", p.noise_id},
              {"v1_window", p.v1_window},
              {"v2_window", p.v2_window}};
}

template <typename T>
T field(const json& entry, const char* key, const std::string& where) {
  if (!entry.contains(key)) throw IngestionError(where, key, "missing field");
  try {
    return entry.at(key).get<T>();
  } catch (const json::exception& e) {
    throw IngestionError(where, key, std::string("wrong type: ") + e.what());
  }
}

template <typename T>
T optional_field(const json& entry, const char* key, const std::string& where, T fallback) {
  if (!entry.contains(key)) return fallback;
  return field<T>(entry, key, where);
}

}  // namespace

void save_dataset(const fs::path& dir, const std::vector<DatasetItem>& items) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create dataset directory " + dir.string() + ": " + ec.message());

  json entries = json::array();
  std::set<std::string> seen;
  for (std::size_t i = 0; i < items.size(); ++i) {
    std::string bytes;
    json entry;
    if (const auto* rec = std::get_if<CSDRecord>(&items[i])) {
      if (rec->state_map.rows() != rec->signal.rows() || rec->state_map.cols() != rec->signal.cols()) {
        throw ShapeError("save_dataset: record " + rec->record_id + " signal/state shapes differ");
      }
      const std::string file = rec->record_id + ".bin";
      detail::append_f64(bytes, std::span(rec->signal.data(), static_cast<std::size_t>(rec->signal.size())));
      bytes.append(reinterpret_cast<const char*>(rec->state_map.data()),
                   static_cast<std::size_t>(rec->state_map.size()));
      entry = record_entry(*rec, file);
    } else {
      const auto& patch = std::get<Patch>(items[i]);
      const std::string id = patch_id(patch, i);
      const std::string file = id + ".bin";
      detail::append_f64(bytes, std::span(patch.pixels.data(), static_cast<std::size_t>(patch.pixels.size())));
      entry = patch_entry(patch, id, file);
    }
    const auto id = entry["id"].get<std::string>();
    if (!is_filesystem_safe(id)) throw IoError("save_dataset: id '" + id + "' is not filesystem-safe");
    if (!seen.insert(id).second) throw IoError("save_dataset: duplicate id '" + id + "'");
    write_file_atomic(dir / entry["file"].get<std::string>(), bytes);
    entries.push_back(std::move(entry));
  }
  json manifest{{"schema_version", kDatasetSchemaVersion},
                {"item_count", items.size()},
                {"items", std::move(entries)}};
  write_file_atomic(dir / "manifest.json", manifest.dump(1) + "\n");
}

std::vector<DatasetItem> load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) {
    throw IngestionError(manifest_path.string(), "", "missing manifest");
  }
  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw IngestionError(manifest_path.string(), "", std::string("malformed JSON: ") + e.what());
  }
  const std::string mpath = manifest_path.string();
  const int version = field<int>(manifest, "schema_version", mpath);
  if (version != kDatasetSchemaVersion) {
    throw IngestionError(mpath, "schema_version", "unsupported version " + std::to_string(version));
  }
  const auto count = field<std::size_t>(manifest, "item_count", mpath);
  if (!manifest.contains("items") || !manifest["items"].is_array()) {
    throw IngestionError(mpath, "items", "missing or not an array");
  }
  const json& entries = manifest["items"];

  std::vector<DatasetItem> items;
  items.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const json& entry = entries[i];
    const std::string where = mpath + ": items[" + std::to_string(i) + "]";
    const auto id = field<std::string>(entry, "id", where);
    const auto kind = field<std::string>(entry, "kind", where);
    const auto file = field<std::string>(entry, "file", where);
    const auto shape = field<std::vector<long>>(entry, "shape", where);
    if (shape.size() != 2 || shape[0] <= 0 || shape[1] <= 0) {
      throw IngestionError(where, "shape", "expected two positive extents");
    }
    const fs::path item_path = dir / file;
    if (!fs::exists(item_path)) {
      throw IngestionError(item_path.string(), "id", "item '" + id + "' listed in manifest but file is missing");
    }
    const std::string bytes = read_file(item_path);
    const auto n = static_cast<std::size_t>(shape[0] * shape[1]);

    if (kind == "record") {
      if (bytes.size() != n * 9) {
        throw IngestionError(item_path.string(), "shape",
                             "file holds " + std::to_string(bytes.size()) + " bytes, expected " +
                                 std::to_string(n * 9) + " for shape " + std::to_string(shape[0]) +
                                 "x" + std::to_string(shape[1]));
      }
      CSDRecord rec;
      rec.record_id = id;
      rec.noise_id = optional_field<std::string>(entry, "noise_id", where, "");
      rec.v1_axis = optional_field<std::vector<double>>(entry, "v1_axis", where, {});
      rec.v2_axis = optional_field<std::vector<double>>(entry, "v2_axis", where, {});
      rec.signal.resize(shape[0], shape[1]);
      rec.state_map.resize(shape[0], shape[1]);
      detail::read_f64(bytes.data(), std::span(rec.signal.data(), n));
      std::memcpy(rec.state_map.data(), bytes.data() + n * 8, n);
      for (std::size_t k = 0; k < n; ++k) {
        if (rec.state_map.data()[k] >= kNumStates) {
          throw IngestionError(item_path.string(), "state_map",
                               "label " + std::to_string(rec.state_map.data()[k]) +
                                   " out of range at flat index " + std::to_string(k));
        }
      }
      if ((!rec.v1_axis.empty() && rec.v1_axis.size() != static_cast<std::size_t>(shape[1])) ||
          (!rec.v2_axis.empty() && rec.v2_axis.size() != static_cast<std::size_t>(shape[0]))) {
        throw IngestionError(where, "v1_axis/v2_axis", "axis length does not match shape");
      }
      for (const auto* axis : {&rec.v1_axis, &rec.v2_axis}) {
        for (std::size_t k = 1; k < axis->size(); ++k) {
          if (!((*axis)[k] > (*axis)[k - 1])) {
            throw IngestionError(where, "axis", "voltage axis not strictly increasing");
          }
        }
      }
      items.emplace_back(std::move(rec));
    } else if (kind == "patch") {
      if (shape[0] != kPatchSize || shape[1] != kPatchSize) {
        throw IngestionError(item_path.string(), "shape",
                             "patch must be 30x30, manifest says " + std::to_string(shape[0]) + "x" +
                                 std::to_string(shape[1]));
      }
      if (bytes.size() != n * 8) {
        throw IngestionError(item_path.string(), "shape",
                             "file holds " + std::to_string(bytes.size()) + " bytes, expected " +
                                 std::to_string(n * 8) + " for a 30x30 float64 patch");
      }
      Patch p;
      p.id = id;
      p.pixels.resize(kPatchSize, kPatchSize);
      detail::read_f64(bytes.data(), std::span(p.pixels.data(), n));
      const auto label = field<std::vector<double>>(entry, "label", where);
      if (label.size() != kNumStates) {
        throw IngestionError(where, "label", "expected 5 components");
      }
      double sum = 0.0;
      for (int s = 0; s < kNumStates; ++s) {
        if (!(label[s] >= 0.0 && label[s] <= 1.0)) {
          throw IngestionError(where, "label", "component " + std::to_string(s) + " outside [0, 1]");
        }
        p.label.p[s] = label[s];
        sum += label[s];
      }
      if (std::abs(sum - 1.0) > 1e-9) throw IngestionError(where, "label", "components do not sum to 1");
      p.parent_id = optional_field<std::string>(entry, "parent_id", where, "");
      p.noise_id = optional_field<std::string>(entry, "noise_id", where, "");
      p.center = optional_field<std::array<int, 2>>(entry, "center", where, {kPatchSize / 2, kPatchSize / 2});
      p.v1_window = optional_field<std::vector<double>>(entry, "v1_window", where, {});
      p.v2_window = optional_field<std::vector<double>>(entry, "v2_window", where, {});
      items.emplace_back(std::move(p));
    } else {
      throw IngestionError(where, "kind", "unknown kind '" + kind + "'");
    }
  }
  if (items.size() != count) {
    throw IngestionError(mpath, "item_count",
                         "manifest advertises " + std::to_string(count) + " items but lists " +
                             std::to_string(items.size()));
  }
  return items;
}

std::vector<Patch> patches_of(const std::vector<DatasetItem>& items) {
  std::vector<Patch> out;
  for (const auto& item : items) {
    if (const auto* p = std::get_if<Patch>(&item)) out.push_back(*p);
  }
  return out;
}

std::vector<CSDRecord> records_of(const std::vector<DatasetItem>& items) {
  std::vector<CSDRecord> out;
  for (const auto& item : items) {
    if (const auto* r = std::get_if<CSDRecord>(&item)) out.push_back(*r);
  }
  return out;
}

}  // namespace qdbench
