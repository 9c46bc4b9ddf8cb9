// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "qdbench/synth.hpp"

#include "qdbench/error.hpp"
#include "qdbench/rng.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <numbers>

namespace qdbench {
namespace {

// Distance from phase u >= 0 to the nearest multiple of period.
double distance_to_line(double u, double period) {
  const double m = std::fmod(u, period);
  return std::min(m, period - m);
}

double line_profile(double distance_volts, const SynthParams& p) {
  const double pixels = distance_volts * static_cast<double>(p.grid_size - 1);
  const double z = pixels / p.edge_width;
  return std::exp(-0.5 * z * z);
}

double lines_at(const SynthParams& p, State s, double v1, double v2) {
  switch (s) {
    case State::no_dot:
      return 0.0;
    case State::single_right:
      return line_profile(distance_to_line(v1 - p.v1_on, p.period1), p);
    case State::single_left:
      return line_profile(distance_to_line(v2 - p.v2_on, p.period2), p);
    case State::single_center: {
      const double u = (v1 + v2 - 2.0 * p.v_merge) / std::numbers::sqrt2;
      const double period = 0.5 * (p.period1 + p.period2);
      return line_profile(distance_to_line(u, period), p);
    }
    case State::double_dot: {
      // Left-dot lines have slope -cross12, right-dot lines slope -1/cross21.
      const double du = v1 - p.v1_on;
      const double dv = v2 - p.v2_on;
      const double ua = dv + p.cross12 * du;
      const double ub = du + p.cross21 * dv;
      const double da = distance_to_line(ua, p.period2) / std::hypot(1.0, p.cross12);
      const double db = distance_to_line(ub, p.period1) / std::hypot(1.0, p.cross21);
      return line_profile(da, p) + line_profile(db, p);
    }
  }
  return 0.0;
}

std::string hex_id(const char* prefix, std::uint64_t v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%s%016llx", prefix, static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t geometry_hash(const SynthParams& p) {
  std::uint64_t h = mix64(static_cast<std::uint64_t>(p.grid_size));
  for (double v : {p.v1_on, p.v2_on, p.v_merge, p.period1, p.period2, p.cross12, p.cross21,
                   p.edge_width, p.noise_white, p.noise_gradient}) {
    std::uint64_t bits;
    static_assert(sizeof bits == sizeof v);
    std::memcpy(&bits, &v, sizeof bits);
    h = mix64(h ^ bits);
  }
  return h;
}

}  // namespace

void SynthParams::validate() const {
  auto fail = [](const char* what) { throw ParameterError(std::string("SynthParams: ") + what); };
  if (grid_size < 30) fail("grid_size >= 30 violated");
  if (!(cross12 > 0.0 && cross12 < 0.5)) fail("0 < cross12 < 0.5 violated");
  if (!(cross21 > 0.0 && cross21 < 0.5)) fail("0 < cross21 < 0.5 violated");
  if (!(period1 > 0.0)) fail("period1 > 0 violated");
  if (!(period2 > 0.0)) fail("period2 > 0 violated");
  if (!(edge_width > 0.0)) fail("edge_width > 0 violated");
  if (!(v1_on < v_merge)) fail("v1_on < v_merge violated");
  if (!(v2_on < v_merge)) fail("v2_on < v_merge violated");
  if (!(noise_white >= 0.0)) fail("noise_white >= 0 violated");
  if (!std::isfinite(noise_gradient)) fail("noise_gradient finite violated");
}

State state_at(const SynthParams& p, double v1, double v2) {
  if (v1 + v2 >= 2.0 * p.v_merge) return State::single_center;
  const bool right = v1 >= p.v1_on;
  const bool left = v2 >= p.v2_on;
  if (right && left) return State::double_dot;
  if (right) return State::single_right;
  if (left) return State::single_left;
  return State::no_dot;
}

CSDRecord generate_csd(const SynthParams& p) {
  p.validate();
  const int n = p.grid_size;
  CSDRecord rec;
  rec.v1_axis.resize(n);
  rec.v2_axis.resize(n);
  for (int i = 0; i < n; ++i) {
    rec.v1_axis[i] = static_cast<double>(i) / static_cast<double>(n - 1);
    rec.v2_axis[i] = rec.v1_axis[i];
  }
  rec.signal.resize(n, n);
  rec.state_map.resize(n, n);

  Rng rng(p.seed);
  for (int r = 0; r < n; ++r) {
    const double v2 = rec.v2_axis[r];
    for (int c = 0; c < n; ++c) {
      const double v1 = rec.v1_axis[c];
      const State s = state_at(p, v1, v2);
      rec.state_map(r, c) = static_cast<std::uint8_t>(s);
      double value = lines_at(p, s, v1, v2) + p.noise_gradient * (v1 + v2);
      if (p.noise_white > 0.0) value += p.noise_white * rng.normal();
      rec.signal(r, c) = value;
    }
  }
  const std::uint64_t device = geometry_hash(p);
  rec.noise_id = hex_id("n", p.seed);
  rec.record_id = hex_id("csd", device) + "_" + rec.noise_id;
  return rec;
}

SynthParams default_params(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x5157));
  SynthParams p;
  p.grid_size = 250;
  const double px = static_cast<double>(p.grid_size - 1);
  p.v1_on = rng.uniform(0.1, 1.0 / 3.0);
  p.v2_on = rng.uniform(0.1, 1.0 / 3.0);
  p.v_merge = rng.uniform(0.6, 0.8);
  p.period1 = rng.uniform(6.0, 14.0) / px;
  p.period2 = rng.uniform(6.0, 14.0) / px;
  p.cross12 = rng.uniform(0.1, 0.35);
  p.cross21 = rng.uniform(0.1, 0.35);
  p.edge_width = rng.uniform(1.0, 2.0);
  p.noise_white = rng.uniform(0.02, 0.15);
  p.noise_gradient = rng.uniform(-0.2, 0.2);
  p.seed = rng.next_u64();
  return p;
}

}  // namespace qdbench
