// Parallel kernels vs. their serial references on shapes the small network
// actually sees. Run with OMP_NUM_THREADS set to compare scaling.

#include <benchmark/benchmark.h>

#include <vector>

#include "dasc/kernels.hpp"
#include "dasc/reference.hpp"
#include "dasc/rng.hpp"

using namespace dasc;
using kernels::ConvGeometry;

namespace {

Tensor filled(const Shape& s, std::uint64_t seed) {
  Tensor t(s);
  Rng rng = make_rng(seed, {});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = uniform(rng, -1.0, 1.0);
  return t;
}

// args: batch, in channels, out channels, side
void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({4, 1, 16, 64})->Args({4, 16, 32, 32})->Args({4, 64, 64, 16})->Unit(benchmark::kMillisecond);
}

void BM_ConvForward(benchmark::State& st) {
  const Tensor x = filled({int(st.range(0)), int(st.range(1)), int(st.range(3)), int(st.range(3))}, 1);
  const Tensor w = filled({int(st.range(2)), int(st.range(1)), 3, 3}, 2);
  const auto g = ConvGeometry::symmetric(1);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::conv2d_forward(x, w, nullptr, g));
}
BENCHMARK(BM_ConvForward)->Apply(conv_args);

void BM_ConvForwardRef(benchmark::State& st) {
  const Tensor x = filled({int(st.range(0)), int(st.range(1)), int(st.range(3)), int(st.range(3))}, 1);
  const Tensor w = filled({int(st.range(2)), int(st.range(1)), 3, 3}, 2);
  const auto g = ConvGeometry::symmetric(1);
  for (auto _ : st) benchmark::DoNotOptimize(ref::conv2d_forward(x, w, nullptr, g));
}
BENCHMARK(BM_ConvForwardRef)->Apply(conv_args);

void BM_ConvBackward(benchmark::State& st) {
  const Tensor x = filled({int(st.range(0)), int(st.range(1)), int(st.range(3)), int(st.range(3))}, 1);
  const Tensor w = filled({int(st.range(2)), int(st.range(1)), 3, 3}, 2);
  const Tensor dy = filled({int(st.range(0)), int(st.range(2)), int(st.range(3)), int(st.range(3))}, 3);
  const auto g = ConvGeometry::symmetric(1);
  Tensor dx, dw, db;
  for (auto _ : st) {
    kernels::conv2d_backward(x, w, dy, g, &dx, &dw, &db);
    benchmark::DoNotOptimize(dx.data());
  }
}
BENCHMARK(BM_ConvBackward)->Apply(conv_args);

void BM_ConvBackwardRef(benchmark::State& st) {
  const Tensor x = filled({int(st.range(0)), int(st.range(1)), int(st.range(3)), int(st.range(3))}, 1);
  const Tensor w = filled({int(st.range(2)), int(st.range(1)), 3, 3}, 2);
  const Tensor dy = filled({int(st.range(0)), int(st.range(2)), int(st.range(3)), int(st.range(3))}, 3);
  const auto g = ConvGeometry::symmetric(1);
  Tensor dx, dw, db;
  for (auto _ : st) {
    ref::conv2d_backward(x, w, dy, g, dx, dw, db);
    benchmark::DoNotOptimize(dx.data());
  }
}
BENCHMARK(BM_ConvBackwardRef)->Apply(conv_args);

void BM_Resize(benchmark::State& st) {
  const Tensor x = filled({4, 2, 16, 16}, 4);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::resize_bilinear(x, 64, 64));
}
BENCHMARK(BM_Resize)->Unit(benchmark::kMicrosecond);

void BM_ResizeRef(benchmark::State& st) {
  const Tensor x = filled({4, 2, 16, 16}, 4);
  for (auto _ : st) benchmark::DoNotOptimize(ref::resize_bilinear(x, 64, 64));
}
BENCHMARK(BM_ResizeRef)->Unit(benchmark::kMicrosecond);

void BM_BatchNorm(benchmark::State& st) {
  const Tensor x = filled({4, 32, 32, 32}, 5);
  const Tensor g = filled({32}, 6), b = filled({32}, 7);
  kernels::BatchNormCache cache;
  for (auto _ : st) benchmark::DoNotOptimize(kernels::batch_norm_train(x, g, b, 1e-5, cache, nullptr));
}
BENCHMARK(BM_BatchNorm)->Unit(benchmark::kMicrosecond);

void BM_BatchNormRef(benchmark::State& st) {
  const Tensor x = filled({4, 32, 32, 32}, 5);
  const Tensor g = filled({32}, 6), b = filled({32}, 7);
  for (auto _ : st) benchmark::DoNotOptimize(ref::batch_norm_train(x, g, b, 1e-5));
}
BENCHMARK(BM_BatchNormRef)->Unit(benchmark::kMicrosecond);

void BM_MaxPool(benchmark::State& st) {
  const Tensor x = filled({4, 16, 64, 64}, 8);
  std::vector<int> argmax;
  for (auto _ : st) benchmark::DoNotOptimize(kernels::maxpool_forward(x, 3, 2, 1, argmax));
}
BENCHMARK(BM_MaxPool)->Unit(benchmark::kMicrosecond);

void BM_MaxPoolRef(benchmark::State& st) {
  const Tensor x = filled({4, 16, 64, 64}, 8);
  for (auto _ : st) benchmark::DoNotOptimize(ref::maxpool_forward(x, 3, 2, 1));
}
BENCHMARK(BM_MaxPoolRef)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
