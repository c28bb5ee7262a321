// SPDX-License-Identifier: Apache-2.0
//
// Parallel convolution kernels against the nested-loop reference.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "psap/kernels.hpp"

using namespace psap::kernels;

namespace {

struct Problem {
  ConvGeometry g;
  std::vector<double> x, w, y, dy, dx, dw;
};

Problem make_problem(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  Problem p;
  p.g = conv_geometry({8, c, hw, hw}, {c, c, 3, 3}, 1, 1);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  p.x.resize(p.g.input_size());
  p.w.resize(p.g.weight_size());
  p.dy.resize(p.g.output_size());
  for (auto* v : {&p.x, &p.w, &p.dy})
    for (double& e : *v) e = nd(rng);
  p.y.resize(p.g.output_size());
  p.dx.resize(p.g.input_size());
  p.dw.resize(p.g.weight_size());
  return p;
}

template <auto Fn>
void forward(benchmark::State& state) {
  Problem p = make_problem(state);
  for (auto _ : state) {
    Fn(p.g, p.x, p.w, p.y);
    benchmark::DoNotOptimize(p.y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(p.g.output_size()));
}

template <auto Fn>
void backward(benchmark::State& state) {
  Problem p = make_problem(state);
  for (auto _ : state) {
    Fn(p.g, p.x, p.w, p.dy, p.dx, p.dw);
    benchmark::DoNotOptimize(p.dw.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(p.g.output_size()));
}

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({16, 32})->Args({32, 16})->Args({64, 8})->Unit(benchmark::kMicrosecond);
}

}  // namespace

BENCHMARK(forward<parallel::conv2d_forward>)->Name("conv_forward/parallel")->Apply(shapes);
BENCHMARK(forward<reference::conv2d_forward>)->Name("conv_forward/reference")->Apply(shapes);
BENCHMARK(backward<parallel::conv2d_backward>)->Name("conv_backward/parallel")->Apply(shapes);
BENCHMARK(backward<reference::conv2d_backward>)->Name("conv_backward/reference")->Apply(shapes);

BENCHMARK_MAIN();
