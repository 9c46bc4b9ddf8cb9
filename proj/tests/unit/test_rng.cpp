// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include "qdbench/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

using qdbench::derive_seed;
using qdbench::Rng;

TEST_CASE("same seed, same stream") {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs |= x != c.next_u64();
  }
  CHECK(differs);
}

TEST_CASE("derive_seed separates streams") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t p = 0; p < 20; ++p) {
    for (std::uint64_t s = 0; s < 20; ++s) seen.insert(derive_seed(p, s));
  }
  CHECK(seen.size() == 400);
  CHECK(derive_seed(5, 1) == derive_seed(5, 1));
}

TEST_CASE("uniform and below stay in range") {
  Rng r(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    const double w = r.uniform(-2.0, 3.0);
    CHECK((w >= -2.0 && w < 3.0));
    CHECK(r.below(7) < 7);
  }
}

TEST_CASE("normal moments") {
  Rng r(9);
  const int n = 200000;
  double s = 0, ss = 0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    ss += x * x;
  }
  const double mean = s / n;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(ss / n - mean * mean - 1.0) < 0.02);
}

TEST_CASE("shuffle is a permutation and seed-determined") {
  std::vector<int> a(50), b(50);
  std::iota(a.begin(), a.end(), 0);
  b = a;
  Rng r1(3), r2(3);
  r1.shuffle(std::span<int>(a));
  r2.shuffle(std::span<int>(b));
  CHECK(a == b);
  std::vector<int> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
}
