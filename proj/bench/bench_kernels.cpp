// Serial reference vs OpenMP kernels on the desk-default layer shapes.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "backdrop/kernels.hpp"

namespace k = backdrop::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

// Layers of the default stack on a 28x28 input, selected by range(0).
k::ConvGeometry layer(int i) {
  switch (i) {
    case 0: return {1, 28, 28, 8, 3, 3, 2, 1};
    case 1: return {8, 14, 14, 16, 3, 3, 2, 1};
    default: return {16, 7, 7, 32, 3, 3, 1, 1};
  }
}

template <bool Omp>
void BM_ConvForward(benchmark::State& state) {
  const auto g = layer(static_cast<int>(state.range(0)));
  const auto in = random_vec(g.input_size(), 1), ker = random_vec(g.kernel_size(), 2);
  std::vector<double> out(g.output_size());
  k::set_num_threads(static_cast<int>(state.range(1)));
  for (auto _ : state) {
    if constexpr (Omp) k::omp::conv2d_forward(g, in, ker, out);
    else k::serial::conv2d_forward(g, in, ker, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(g.output_size()));
}

template <bool Omp>
void BM_ConvBackward(benchmark::State& state) {
  const auto g = layer(static_cast<int>(state.range(0)));
  const auto in = random_vec(g.input_size(), 1), ker = random_vec(g.kernel_size(), 2);
  const auto d = random_vec(g.output_size(), 3);
  std::vector<double> din(g.input_size()), dk(g.kernel_size());
  k::set_num_threads(static_cast<int>(state.range(1)));
  for (auto _ : state) {
    if constexpr (Omp) {
      k::omp::conv2d_backward_input(g, ker, d, din);
      k::omp::conv2d_backward_kernel(g, in, d, dk);
    } else {
      k::serial::conv2d_backward_input(g, ker, d, din);
      k::serial::conv2d_backward_kernel(g, in, d, dk);
    }
    benchmark::DoNotOptimize(din.data());
    benchmark::DoNotOptimize(dk.data());
  }
}

template <bool Omp>
void BM_Dense(benchmark::State& state) {
  const auto feat = static_cast<std::size_t>(state.range(0));
  const std::size_t outs = 112;
  const auto x = random_vec(feat, 1), w = random_vec(feat * outs, 2), b = random_vec(outs, 3);
  const auto d = random_vec(outs, 4);
  std::vector<double> out(outs), dx(feat), dw(feat * outs), db(outs);
  k::set_num_threads(static_cast<int>(state.range(1)));
  for (auto _ : state) {
    if constexpr (Omp) {
      k::omp::dense_forward(x, w, b, out);
      k::omp::dense_backward(x, w, d, dx, dw, db);
    } else {
      k::serial::dense_forward(x, w, b, out);
      k::serial::dense_backward(x, w, d, dx, dw, db);
    }
    benchmark::DoNotOptimize(out.data());
    benchmark::DoNotOptimize(dw.data());
  }
}

void thread_args(benchmark::internal::Benchmark* b) {
  const int hw = k::max_threads();
  for (int layer = 0; layer < 3; ++layer)
    for (int t = 1; t <= hw; t *= 2) b->Args({layer, t});
}

void dense_args(benchmark::internal::Benchmark* b) {
  const int hw = k::max_threads();
  for (int feat : {32, 512})
    for (int t = 1; t <= hw; t *= 2) b->Args({feat, t});
}

}  // namespace

BENCHMARK(BM_ConvForward<false>)->Apply(thread_args)->ArgNames({"layer", "threads"});
BENCHMARK(BM_ConvForward<true>)->Apply(thread_args)->ArgNames({"layer", "threads"});
BENCHMARK(BM_ConvBackward<false>)->Apply(thread_args)->ArgNames({"layer", "threads"});
BENCHMARK(BM_ConvBackward<true>)->Apply(thread_args)->ArgNames({"layer", "threads"});
BENCHMARK(BM_Dense<false>)->Apply(dense_args)->ArgNames({"features", "threads"});
BENCHMARK(BM_Dense<true>)->Apply(dense_args)->ArgNames({"features", "threads"});

BENCHMARK_MAIN();
