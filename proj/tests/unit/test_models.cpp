// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "gradcheck.hpp"

#include "qdbench/error.hpp"
#include "qdbench/models.hpp"

#include <cmath>
#include <numeric>

using namespace qdbench;

namespace {

// Parameter counts computed layer by layer, independently of the model code.
std::size_t linear(std::size_t in, std::size_t out) { return in * out + out; }
std::size_t conv(std::size_t in, std::size_t out, std::size_t k) { return k * k * in * out + out; }
std::size_t layer_norm(std::size_t d) { return 2 * d; }

std::size_t cnn_oracle() {
  return conv(1, 16, 3) + conv(16, 32, 3) + conv(32, 64, 3) + conv(64, 64, 3) + linear(64, 5);
}

std::size_t unet_oracle() {
  const auto dconv = [](std::size_t in, std::size_t out) { return conv(in, out, 3) + conv(out, out, 3); };
  return dconv(1, 64) + dconv(64, 128) + dconv(128, 256) + conv(256, 128, 2) + dconv(256, 128) +
         conv(128, 64, 2) + dconv(128, 64) + conv(64, 5, 1);
}

std::size_t vit_oracle() {
  const std::size_t d = 128;
  const std::size_t encoder = layer_norm(d) + linear(d, 3 * d) + linear(d, d) + layer_norm(d) +
                              linear(d, 512) + linear(512, d);
  return linear(25, d) + d + 37 * d + 6 * encoder + layer_norm(d) + linear(d, 256) + linear(256, 128) +
         linear(128, 5);
}

std::size_t mdn_oracle() {
  return linear(900, 128) + linear(128, 3) + 2 * linear(128, 3 * 900) + linear(3 * 900, 5);
}

std::vector<float> vec(const Tensor<float>& t) { return {t.values().begin(), t.values().end()}; }

Tensor<float> random_batch(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> x(Shape{n, 30, 30});
  for (auto& v : x.values()) v = static_cast<float>(rng.normal());
  return x;
}

}  // namespace

TEST_CASE("family names round-trip") {
  for (Family f : kAllFamilies) CHECK(parse_family(to_string(f)) == f);
  CHECK_FALSE(parse_family("resnet").has_value());
}

TEST_CASE("parameter counts match the layer-by-layer oracle") {
  CHECK(cnn_oracle() == 60549);
  CHECK(unet_oracle() == 1861957);
  CHECK(vit_oracle() == 1264645);
  CHECK(mdn_oracle() == 825820);
  CHECK(count_parameters(build_model(default_spec(Family::cnn), 1)) == cnn_oracle());
  CHECK(count_parameters(build_model(default_spec(Family::unet), 1)) == unet_oracle());
  CHECK(count_parameters(build_model(default_spec(Family::vit), 1)) == vit_oracle());
  CHECK(count_parameters(build_model(default_spec(Family::mdn), 1)) == mdn_oracle());
}

TEST_CASE("parameter counts are within 2% of the reference budgets") {
  for (Family f : kAllFamilies) {
    const double m = count_parameters(build_model(default_spec(f), 3)) / 1e6;
    const double ref = reference_parameters_millions(f);
    CAPTURE(to_string(f));
    CHECK(std::abs(m - ref) <= 0.02 * ref);
  }
}

TEST_CASE("outputs are probability rows for every family") {
  const Tensor<float> x = random_batch(3, 11);
  for (Family f : kAllFamilies) {
    CAPTURE(to_string(f));
    ModelInstance m = build_model(default_spec(f), 5);
    const Tensor<float> p = m.predict(x);
    REQUIRE(p.shape() == Shape{3, 5});
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 5; ++c) {
        CHECK(p[r * 5 + c] >= 0.0f);
        s += p[r * 5 + c];
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
    }
  }
}

TEST_CASE("same seed gives identical weights and outputs") {
  const Tensor<float> x = random_batch(2, 4);
  for (Family f : kAllFamilies) {
    CAPTURE(to_string(f));
    ModelInstance a = build_model(default_spec(f), 77);
    ModelInstance b = build_model(default_spec(f), 77);
    ModelInstance c = build_model(default_spec(f), 78);
    CHECK(vec(a.predict(x)) == vec(b.predict(x)));
    CHECK(a.named_weights()[0].values != c.named_weights()[0].values);
  }
}

TEST_CASE("evaluation mode is deterministic and training mode applies dropout") {
  const Tensor<float> x = random_batch(4, 9);
  ModelInstance m = build_model(default_spec(Family::cnn), 2);
  m.set_mode(Mode::evaluation);
  const auto e1 = vec(m.forward(x));
  const auto e2 = vec(m.forward(x));
  CHECK(e1 == e2);
  CHECK(vec(m.predict(x)) == e1);
  m.set_mode(Mode::training);
  const auto t1 = vec(m.forward(x));
  const auto t2 = vec(m.forward(x));
  CHECK(t1 != t2);
}

TEST_CASE("bad input shapes are rejected") {
  ModelInstance cnn = build_model(default_spec(Family::cnn), 1);
  CHECK_THROWS_AS(cnn.predict(Tensor<float>(Shape{2, 28, 28})), ShapeError);
  CHECK_THROWS_AS(cnn.predict(Tensor<float>(Shape{0, 30, 30})), ShapeError);
  ModelInstance mdn = build_model(default_spec(Family::mdn), 1);
  CHECK_THROWS_AS(mdn.predict(Tensor<float>(Shape{2, 899})), ShapeError);
  CHECK(mdn.predict(Tensor<float>(Shape{2, 900})).shape() == Shape{2, 5});
}

TEST_CASE("weights round-trip through named arrays and clone") {
  const Tensor<float> x = random_batch(2, 6);
  ModelInstance a = build_model(default_spec(Family::vit), 10);
  ModelInstance b = build_model(default_spec(Family::vit), 20);
  b.load_weights(a.named_weights());
  CHECK(vec(a.predict(x)) == vec(b.predict(x)));
  ModelInstance c = a.clone();
  CHECK(vec(c.predict(x)) == vec(a.predict(x)));

  auto arrays = a.named_weights();
  arrays[0].shape.push_back(1);
  CHECK_THROWS_AS(b.load_weights(arrays), ShapeError);
  arrays = a.named_weights();
  arrays.pop_back();
  CHECK_THROWS_AS(b.load_weights(arrays), ShapeError);
}

TEST_CASE("standard normal cdf") {
  CHECK(standard_normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(standard_normal_cdf(1.0) == doctest::Approx(0.8413447460685429));
  CHECK(standard_normal_cdf(-1.96) == doctest::Approx(0.024997895148220435));
}

TEST_CASE("mixture cdf features") {
  MixtureParams mix;
  mix.dims = 2;
  mix.weights = {0.25, 0.75};
  mix.means = {0.0, 1.0, -1.0, 2.0};
  mix.stds = {1.0, 2.0, 0.5, 1.0};
  const std::vector<double> x = {0.0, 3.0};
  const auto f = mdn_cdf_features(x, mix);
  REQUIRE(f.size() == 4);
  CHECK(f[0] == doctest::Approx(0.5));
  CHECK(f[1] == doctest::Approx(0.8413447460685429));
  CHECK(f[2] == doctest::Approx(0.9772498680518208));
  CHECK(f[3] == doctest::Approx(0.8413447460685429));
  for (double v : f) CHECK((v > 0.0 && v < 1.0));

  const auto far = mdn_cdf_features(std::vector<double>{60.0, -1e4}, mix);
  CHECK(far[0] > 0.5);
  CHECK(far[0] < 1.0);
  CHECK(far[1] > 0.0);
  CHECK(far[1] < 1e-300);
  CHECK(far[2] < 1.0);

  mix.stds[1] = 0.0;
  CHECK_THROWS_AS(mdn_cdf_features(x, mix), NumericalError);
  mix.stds[1] = 2.0;
  CHECK_THROWS_AS(mdn_cdf_features(std::vector<double>{1.0}, mix), ShapeError);
}

TEST_CASE("predicted mixtures are valid") {
  ModelInstance m = build_model(default_spec(Family::mdn), 12);
  std::vector<float> x(900);
  Rng rng(3);
  for (auto& v : x) v = static_cast<float>(rng.uniform());
  const MixtureParams mix = mdn_mixture(m, x);
  REQUIRE(mix.weights.size() == 3);
  CHECK(mix.dims == 900);
  CHECK(std::accumulate(mix.weights.begin(), mix.weights.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-5));
  for (double s : mix.stds) CHECK(s > 0.0);
  std::vector<double> xd(x.begin(), x.end());
  for (double v : mdn_cdf_features(xd, mix)) CHECK((v > 0.0 && v < 1.0));
  CHECK_THROWS_AS(mdn_mixture(build_model(default_spec(Family::cnn), 1), x), ConfigError);
}

TEST_CASE("gradients match finite differences") {
  struct Case {
    ModelSpec spec;
    Shape input;
    std::size_t probes;
  };
  ModelSpec small_mdn = default_spec(Family::mdn);
  small_mdn.mdn_inputs = 12;
  small_mdn.mdn_hidden = 6;
  small_mdn.mdn_components = 2;
  std::vector<Case> cases = {
      {default_spec(Family::cnn), Shape{2, 30, 30}, 40},
      {default_spec(Family::unet), Shape{1, 30, 30}, 12},
      {default_spec(Family::vit), Shape{2, 30, 30}, 40},
      {small_mdn, Shape{3, 12}, 60},
  };
  for (auto& c : cases) {
    c.spec.dropout = 0.0;
    CAPTURE(to_string(c.spec.family));
    auto net = make_network<double>(c.spec, 31);
    const auto report = testing::check_network_gradients(*net, c.input, c.probes, 1234);
    CAPTURE(report.worst_name);
    CHECK(report.worst_relative_error < 1e-4);
  }
}
