// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "qdbench/checkpoint.hpp"

#include "binary_io.hpp"
#include "qdbench/error.hpp"
#include "qdbench/fsutil.hpp"

#include <nlohmann/json.hpp>

#include <cstring>

namespace qdbench {

namespace {

constexpr char kMagic[8] = {'Q', 'D', 'B', 'C', 'K', 'P', 'T', '1'};

void append_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t read_u64(const std::string& in, std::size_t offset) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{static_cast<unsigned char>(in[offset + i])} << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelInstance& model, const CheckpointMeta& meta) {
  const ModelSpec& spec = model.spec();
  nlohmann::json manifest;
  manifest["format"] = 1;
  manifest["family"] = std::string(to_string(spec.family));
  manifest["spec"] = {{"dropout", spec.dropout},
                      {"classes", spec.classes},
                      {"mdn_inputs", spec.mdn_inputs},
                      {"mdn_hidden", spec.mdn_hidden},
                      {"mdn_components", spec.mdn_components}};
  manifest["spec_hash"] = spec_hash(spec);
  manifest["seed"] = model.seed();
  manifest["epoch"] = meta.epoch;
  manifest["normalization"] = std::string(to_string(meta.normalization));
  manifest["metrics"] = meta.metrics;

  std::string payload;
  nlohmann::json arrays = nlohmann::json::array();
  for (const auto& a : model.named_weights()) {
    arrays.push_back({{"name", a.name}, {"shape", a.shape}, {"offset", payload.size()}});
    detail::append_f32(payload, a.values);
  }
  manifest["arrays"] = arrays;

  const std::string header = manifest.dump();
  std::string out(kMagic, sizeof kMagic);
  append_u64(out, header.size());
  out += header;
  out += payload;
  write_file_atomic(path, out);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw IoError(path.string() + ": not a checkpoint file");
  }
  const std::uint64_t header_size = read_u64(bytes, 8);
  if (header_size > bytes.size() - 16) throw IoError(path.string() + ": truncated manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(16, header_size));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": malformed manifest: " + e.what());
  }
  const std::size_t payload = 16 + header_size;

  try {
    const auto family = parse_family(manifest.at("family").get<std::string>());
    if (!family) throw IoError(path.string() + ": unknown family");
    ModelSpec spec;
    spec.family = *family;
    const auto& s = manifest.at("spec");
    spec.dropout = s.at("dropout").get<double>();
    spec.classes = s.at("classes").get<std::size_t>();
    spec.mdn_inputs = s.at("mdn_inputs").get<std::size_t>();
    spec.mdn_hidden = s.at("mdn_hidden").get<std::size_t>();
    spec.mdn_components = s.at("mdn_components").get<std::size_t>();
    if (spec_hash(spec) != manifest.at("spec_hash").get<std::uint64_t>()) {
      throw IoError(path.string() + ": spec hash mismatch");
    }

    CheckpointMeta meta;
    meta.epoch = manifest.at("epoch").get<int>();
    const auto norm = parse_normalization(manifest.at("normalization").get<std::string>());
    if (!norm) throw IoError(path.string() + ": unknown normalization");
    meta.normalization = *norm;
    meta.metrics = manifest.at("metrics").get<std::map<std::string, double>>();

    std::vector<NamedArray> arrays;
    for (const auto& a : manifest.at("arrays")) {
      NamedArray na;
      na.name = a.at("name").get<std::string>();
      na.shape = a.at("shape").get<Shape>();
      const std::size_t offset = a.at("offset").get<std::size_t>();
      const std::size_t n = element_count(na.shape);
      if (payload + offset + 4 * n > bytes.size()) throw IoError(path.string() + ": array '" + na.name + "' truncated");
      na.values.resize(n);
      detail::read_f32(bytes.data() + payload + offset, na.values);
      arrays.push_back(std::move(na));
    }

    ModelInstance model(spec, manifest.at("seed").get<std::uint64_t>());
    model.load_weights(arrays);
    return {std::move(model), std::move(meta)};
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": bad manifest field: " + e.what());
  }
}

}  // namespace qdbench
