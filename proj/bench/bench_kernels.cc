// Copyright 2026 The splatperc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// OpenMP kernels against their serial references.

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "splatperc/kernels.h"
#include "splatperc/splat.h"
#include "splatperc/test_images.h"

namespace {

using namespace splatperc;

Plane random_plane(int size, uint64_t seed) {
  Plane p(size, size);
  for (size_t i = 0; i < p.size(); ++i) p.data[i] = hash_uniform(seed, i);
  return p;
}

Kernel2D box_kernel(int radius) {
  Kernel2D k;
  k.radius = radius;
  const int side = 2 * radius + 1;
  k.taps.assign(static_cast<size_t>(side) * side, 1.0 / (side * side));
  return k;
}

SplatSet scene(int n, int size) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SplatSet s;
  for (int i = 0; i < n; ++i) {
    Splat sp;
    sp.p[kPosX] = u(rng) * size;
    sp.p[kPosY] = u(rng) * size;
    sp.p[kLogScale1] = std::log(1.0 + 4.0 * u(rng));
    sp.p[kLogScale2] = std::log(1.0 + 2.0 * u(rng));
    sp.p[kRotation] = 3.0 * u(rng);
    for (int c = 0; c < 3; ++c) sp.p[kColorR + c] = u(rng) - 0.5;
    sp.p[kOpacity] = u(rng);
    sp.depth_key = u(rng);
    s.splats.push_back(sp);
  }
  return s;
}

template <bool kParallel>
void BM_Correlate(benchmark::State& state) {
  const Plane in = random_plane(static_cast<int>(state.range(0)), 1);
  const Kernel2D k = box_kernel(6);
  for (auto _ : state)
    benchmark::DoNotOptimize(kParallel ? correlate(in, k) : reference::correlate(in, k));
}

template <bool kParallel>
void BM_CorrelateSeparable(benchmark::State& state) {
  const Plane in = random_plane(static_cast<int>(state.range(0)), 2);
  const Kernel1D k = gaussian_kernel_1d(2.0);
  for (auto _ : state)
    benchmark::DoNotOptimize(kParallel ? correlate_separable(in, k, k)
                                       : reference::correlate_separable(in, k, k));
}

template <bool kParallel>
void BM_PoolVariable(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const Plane in = random_plane(size, 3);
  Plane sigma(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) sigma.at(y, x) = 1.0 + 4.0 * x / size;
  for (auto _ : state)
    benchmark::DoNotOptimize(kParallel ? pool_variable(in, sigma)
                                       : reference::pool_variable(in, sigma));
}

template <bool kParallel>
void BM_Render(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const SplatSet s = scene(512, size);
  for (auto _ : state)
    benchmark::DoNotOptimize(kParallel ? render(s, size, size) : reference::render(s, size, size));
}

template <bool kParallel>
void BM_RenderBackward(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const SplatSet s = scene(512, size);
  ImageBuffer g(size, size, 3);
  for (size_t i = 0; i < g.size(); ++i) g.data[i] = hash_uniform(4, i) - 0.5;
  for (auto _ : state)
    benchmark::DoNotOptimize(kParallel ? render_backward(s, size, size, {0, 0, 0}, g)
                                       : reference::render_backward(s, size, size, {0, 0, 0}, g));
}

BENCHMARK(BM_Correlate<true>)->Name("correlate/openmp")->Arg(64)->Arg(256);
BENCHMARK(BM_Correlate<false>)->Name("correlate/reference")->Arg(64)->Arg(256);
BENCHMARK(BM_CorrelateSeparable<true>)->Name("correlate_separable/openmp")->Arg(64)->Arg(256);
BENCHMARK(BM_CorrelateSeparable<false>)->Name("correlate_separable/reference")->Arg(64)->Arg(256);
BENCHMARK(BM_PoolVariable<true>)->Name("pool_variable/openmp")->Arg(64)->Arg(128);
BENCHMARK(BM_PoolVariable<false>)->Name("pool_variable/reference")->Arg(64)->Arg(128);
BENCHMARK(BM_Render<true>)->Name("render/openmp")->Arg(64)->Arg(128);
BENCHMARK(BM_Render<false>)->Name("render/reference")->Arg(64)->Arg(128);
BENCHMARK(BM_RenderBackward<true>)->Name("render_backward/openmp")->Arg(64)->Arg(128);
BENCHMARK(BM_RenderBackward<false>)->Name("render_backward/reference")->Arg(64)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
