// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include "qdbench/data.hpp"
#include "qdbench/error.hpp"
#include "qdbench/rng.hpp"
#include "qdbench/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace qdbench;

namespace {

StateGrid filled(std::uint8_t v) {
  StateGrid g(kPatchSize, kPatchSize);
  g.setConstant(v);
  return g;
}

// Pixel-count oracle over the parent state map.
std::array<int, 5> count_states(const StateGrid& map, int r0, int c0) {
  std::array<int, 5> n{};
  for (int r = r0; r < r0 + kPatchSize; ++r) {
    for (int c = c0; c < c0 + kPatchSize; ++c) ++n[map(r, c)];
  }
  return n;
}

}  // namespace

TEST_CASE("fractional label examples") {
  StateGrid g = filled(4);
  for (int i = 0; i < 270; ++i) g.data()[i] = 1;
  const LabelVector l = fractional_label(g);
  CHECK(l[0] == 0.0);
  CHECK(l[1] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(l[4] == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(l.argmax() == 4);

  CHECK(fractional_label(filled(0)).p == std::array<double, 5>{1, 0, 0, 0, 0});
  StateGrid even(kPatchSize, kPatchSize);
  for (int i = 0; i < kPatchPixels; ++i) even.data()[i] = static_cast<std::uint8_t>(i / 180);
  for (int k = 0; k < 5; ++k) CHECK(fractional_label(even)[k] == doctest::Approx(0.2).epsilon(1e-12));

  g(3, 3) = 5;
  CHECK_THROWS_AS(fractional_label(g), DataError);
}

TEST_CASE("extracted patches carry exact labels and provenance") {
  const CSDRecord rec = generate_csd(default_params(11));
  const auto patches = extract_patches(rec, 10, 3);
  REQUIRE(patches.size() == 10);
  for (const Patch& p : patches) {
    CHECK(p.pixels.rows() == kPatchSize);
    CHECK(p.pixels.cols() == kPatchSize);
    const int r0 = p.center[0] - 15, c0 = p.center[1] - 15;
    REQUIRE(r0 >= 0);
    REQUIRE(c0 >= 0);
    REQUIRE(r0 + kPatchSize <= rec.signal.rows());
    REQUIRE(c0 + kPatchSize <= rec.signal.cols());
    const auto n = count_states(rec.state_map, r0, c0);
    double sum = 0;
    for (int k = 0; k < 5; ++k) {
      CHECK(p.label[k] == static_cast<double>(n[k]) / 900.0);
      sum += p.label[k];
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
    CHECK(p.pixels == rec.signal.block(r0, c0, kPatchSize, kPatchSize));
    CHECK(p.parent_id == rec.record_id);
    CHECK(p.noise_id == rec.noise_id);
    REQUIRE(p.v1_window.size() == kPatchSize);
    CHECK(p.v1_window.front() == rec.v1_axis[c0]);
    CHECK(p.v2_window.front() == rec.v2_axis[r0]);
  }
}

TEST_CASE("patch centers are seed-determined") {
  const CSDRecord rec = generate_csd(default_params(2));
  const auto centers = [&](std::uint64_t seed) {
    std::multiset<std::array<int, 2>> out;
    for (const auto& p : extract_patches(rec, 10, seed)) out.insert(p.center);
    return out;
  };
  CHECK(centers(3) == centers(3));
  CHECK(centers(3) != centers(4));
}

TEST_CASE("a 30x30 record has one placement") {
  SynthParams sp;
  sp.grid_size = 30;
  const CSDRecord rec = generate_csd(sp);
  const auto patches = extract_patches(rec, 1, 0);
  REQUIRE(patches.size() == 1);
  CHECK(patches[0].center == std::array<int, 2>{15, 15});
  CHECK(patches[0].label == fractional_label(rec.state_map));
}

TEST_CASE("extraction errors") {
  CSDRecord small;
  small.signal = RealGrid::Zero(29, 40);
  small.state_map = StateGrid::Zero(29, 40);
  CHECK_THROWS_AS(extract_patches(small, 1, 0), ShapeError);
  const CSDRecord rec = generate_csd(SynthParams{});
  CHECK_THROWS_AS(extract_patches(rec, 0, 0), ConfigError);
}

TEST_CASE("unify_size center-crops") {
  RealGrid a(60, 60);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = static_cast<double>(i);
  CHECK(unify_size(a) == a.block(15, 15, 30, 30));
  RealGrid b = a.topLeftCorner(30, 30);
  CHECK(unify_size(b) == b);
  RealGrid c = a.block(0, 0, 31, 30);
  CHECK(unify_size(c) == c.block(0, 0, 30, 30));
  CHECK_THROWS_AS(unify_size(a.topLeftCorner(29, 60)), ShapeError);
}

TEST_CASE("normalization") {
  RealGrid x = RealGrid::Constant(30, 30, 4.0);
  x(0, 0) = 2.0;
  x(0, 1) = 6.0;
  const RealGrid m = normalize(x, {NormalizationKind::min_max});
  CHECK(m(0, 0) == 0.0);
  CHECK(m(0, 1) == 1.0);
  CHECK(m(5, 5) == 0.5);

  Rng rng(5);
  RealGrid y(30, 30);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = 3.0 + 2.0 * rng.normal();
  const RealGrid z = normalize(y, {NormalizationKind::z_score});
  const double mean = z.mean();
  const double var = (z.array() - mean).square().mean();
  CHECK(std::abs(mean) <= 1e-9);
  CHECK(std::abs(std::sqrt(var) - 1.0) <= 1e-9);

  const RealGrid flat = RealGrid::Constant(30, 30, 7.0);
  CHECK(normalize(flat, {NormalizationKind::min_max}).isZero(0.0));
  CHECK(normalize(flat, {NormalizationKind::z_score}).isZero(0.0));

  const RealGrid once = normalize(y, {NormalizationKind::min_max});
  CHECK(normalize(once, {NormalizationKind::min_max}).isApprox(once, 1e-15));
}

TEST_CASE("normalization names round-trip") {
  for (auto k : {NormalizationKind::min_max, NormalizationKind::z_score}) CHECK(parse_normalization(to_string(k)) == k);
  CHECK_FALSE(parse_normalization("robust").has_value());
}

TEST_CASE("split arithmetic and nesting") {
  std::vector<std::vector<std::size_t>> pools;
  for (double f : kBudgetFractions) {
    const DatasetSplit s = make_splits(159900, 9900, f, 17);
    CHECK(s.test_ids.size() == 9900);
    CHECK(s.pool_ids.size() == static_cast<std::size_t>(std::llround(f * 150000)));
    pools.push_back(s.pool_ids);
  }
  CHECK(pools[0].size() == 37500);
  CHECK(pools[3].size() == 150000);
  const DatasetSplit full = make_splits(159900, 9900, 1.0, 17);
  const DatasetSplit quarter = make_splits(159900, 9900, 0.25, 17);
  CHECK(full.test_ids == quarter.test_ids);
  std::set<std::size_t> test(full.test_ids.begin(), full.test_ids.end());
  for (std::size_t i = 0; i + 1 < pools.size(); ++i) {
    std::set<std::size_t> bigger(pools[i + 1].begin(), pools[i + 1].end());
    for (std::size_t id : pools[i]) REQUIRE(bigger.count(id) == 1);
  }
  for (std::size_t id : full.pool_ids) REQUIRE(test.count(id) == 0);
  std::set<std::size_t> all(full.pool_ids.begin(), full.pool_ids.end());
  all.insert(test.begin(), test.end());
  CHECK(all.size() == 159900);

  CHECK(make_splits(1000, 100, 0.5, 1).pool_ids == make_splits(1000, 100, 0.5, 1).pool_ids);
  CHECK(make_splits(1000, 100, 0.5, 1).test_ids != make_splits(1000, 100, 0.5, 2).test_ids);
  CHECK_THROWS_AS(make_splits(1000, 100, 0.3, 1), ConfigError);
  CHECK_THROWS_AS(make_splits(1000, 1000, 1.0, 1), ConfigError);
  CHECK_THROWS_AS(make_splits(1000, 0, 1.0, 1), ConfigError);
}
