// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include "qdbench/checkpoint.hpp"
#include "qdbench/error.hpp"
#include "qdbench/fsutil.hpp"
#include "tempdir.hpp"

#include <cstring>

using namespace qdbench;
using qdbench::testing::TempDir;

namespace {

Tensor<float> batch(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> x(Shape{n, 30, 30});
  for (auto& v : x.values()) v = static_cast<float>(rng.uniform());
  return x;
}

void perturb(ModelInstance& m, std::uint64_t seed) {
  Rng rng(seed);
  for (auto* p : m.parameters()) {
    for (auto& v : p->value.values()) v += static_cast<float>(0.01 * rng.normal());
  }
}

}  // namespace

TEST_CASE("checkpoint round-trip reproduces predictions exactly") {
  TempDir tmp;
  const auto x = batch(4, 1);
  for (Family f : kAllFamilies) {
    CAPTURE(to_string(f));
    ModelInstance m(default_spec(f), 11);
    perturb(m, 2);
    CheckpointMeta meta;
    meta.epoch = 17;
    meta.normalization = NormalizationKind::z_score;
    meta.metrics = {{"val_loss", 0.125}, {"train_loss", 0.25}};
    const auto path = tmp / (std::string(to_string(f)) + ".bin");
    save_checkpoint(path, m, meta);
    const LoadedCheckpoint c = load_checkpoint(path);
    CHECK(c.meta.epoch == 17);
    CHECK(c.meta.normalization == NormalizationKind::z_score);
    CHECK(c.meta.metrics == meta.metrics);
    CHECK(c.model.spec() == m.spec());
    CHECK(c.model.parameter_count() == m.parameter_count());
    CHECK(c.model.mode() == Mode::evaluation);
    const auto a = m.predict(x), b = c.model.predict(x);
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);

    const auto again = tmp / "again.bin";
    save_checkpoint(again, c.model, c.meta);
    CHECK(read_file(again) == read_file(path));
  }
}

TEST_CASE("malformed checkpoints are rejected") {
  TempDir tmp;
  ModelInstance m(default_spec(Family::cnn), 3);
  const auto path = tmp / "ok.bin";
  save_checkpoint(path, m, {});
  const std::string good = read_file(path);

  CHECK_THROWS_AS(load_checkpoint(tmp / "absent.bin"), IoError);

  write_file_atomic(tmp / "magic.bin", "XXXXXXXX" + good.substr(8));
  CHECK_THROWS_AS(load_checkpoint(tmp / "magic.bin"), IoError);

  write_file_atomic(tmp / "short.bin", good.substr(0, good.size() - 4));
  CHECK_THROWS_AS(load_checkpoint(tmp / "short.bin"), IoError);

  write_file_atomic(tmp / "tiny.bin", good.substr(0, 12));
  CHECK_THROWS_AS(load_checkpoint(tmp / "tiny.bin"), IoError);

  std::string hacked = good;
  const auto pos = hacked.find("\"dropout\"");
  REQUIRE(pos != std::string::npos);
  const auto digit = hacked.find_first_of("0123456789", pos);
  hacked[digit + 2] = hacked[digit + 2] == '9' ? '8' : '9';
  write_file_atomic(tmp / "hash.bin", hacked);
  CHECK_THROWS(load_checkpoint(tmp / "hash.bin"));
}
