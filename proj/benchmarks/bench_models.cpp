// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "qdbench/metrics.hpp"
#include "qdbench/models.hpp"
#include "qdbench/rng.hpp"
#include "qdbench/synth.hpp"
#include "qdbench/data.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace qdbench;

Tensor<float> random_batch(std::size_t n, std::uint64_t seed) {
  Tensor<float> x(Shape{n, 30, 30});
  Rng rng(seed);
  for (auto& v : x.values()) v = static_cast<float>(rng.uniform());
  return x;
}

void BM_Predict(benchmark::State& state, Family family) {
  const ModelInstance m(default_spec(family), 1);
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor<float> x = random_batch(n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(m.predict(x));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

void BM_TrainStep(benchmark::State& state, Family family) {
  ModelInstance m(default_spec(family), 1);
  m.set_mode(Mode::training);
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor<float> x = random_batch(n, 3);
  Tensor<float> grad(Shape{n, 5});
  grad.fill(-1.0f / static_cast<float>(n));
  for (auto _ : state) {
    m.zero_grad();
    benchmark::DoNotOptimize(m.forward(x));
    m.backward(grad);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

void BM_ExtractPatches(benchmark::State& state) {
  const CSDRecord rec = generate_csd(default_params(4));
  for (auto _ : state) benchmark::DoNotOptimize(extract_patches(rec, 100, 5));
  state.SetItemsProcessed(state.iterations() * 100);
}

void BM_GenerateCsd(benchmark::State& state) {
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(generate_csd(default_params(seed++)));
}

}  // namespace

BENCHMARK_CAPTURE(BM_Predict, cnn, Family::cnn)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Predict, unet, Family::unet)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Predict, vit, Family::vit)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Predict, mdn, Family::mdn)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_TrainStep, cnn, Family::cnn)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_TrainStep, unet, Family::unet)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_TrainStep, vit, Family::vit)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_TrainStep, mdn, Family::mdn)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ExtractPatches)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GenerateCsd)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
