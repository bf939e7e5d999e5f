// OpenMP kernels against the serial reference at encoder/synthesis sizes.
// Set MAEVI_THREADS to cap the worker count.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "maevi/kernels.hpp"
#include "maevi/parallel.hpp"
#include "maevi/reference.hpp"

using namespace maevi;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// A 3x3x3 SmoothNet layer on a 64x64 feature map.
kernels::ConvGeometry conv_geometry(std::size_t side) {
  kernels::ConvGeometry g;
  g.c_in = 8;
  g.c_out = 8;
  g.t = 4;
  g.h = g.w = side;
  g.kt = g.kh = g.kw = 3;
  g.pad_t = g.pad = 1;
  return g;
}

struct ConvData {
  kernels::ConvGeometry g;
  std::vector<double> in, weight, bias, out, grad_in, grad_weight, grad_bias;
  explicit ConvData(std::size_t side)
      : g(conv_geometry(side)),
        in(noise(g.in_size(), 1)),
        weight(noise(g.weight_size(), 2)),
        bias(noise(g.c_out, 3)),
        out(g.out_size()),
        grad_in(g.in_size()),
        grad_weight(g.weight_size()),
        grad_bias(g.c_out) {}
};

struct DeformData {
  kernels::DeformGeometry g;
  std::vector<double> frames, weights, offsets, out, grad_frames, grad_weights, grad_offsets;
  explicit DeformData(std::size_t side) {
    g.h = g.w = side;
    g.grid = kernels::square_grid(3);
    frames = noise(g.frames_size(), 4, 0.0, 1.0);
    weights = noise(g.weights_size(), 5, 0.0, 1.0 / 36.0);
    offsets = noise(g.offsets_size(), 6, -8.0, 8.0);
    out.resize(g.out_size());
    grad_frames.resize(g.frames_size());
    grad_weights.resize(g.weights_size());
    grad_offsets.resize(g.offsets_size());
  }
};

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  ConvData d(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::conv_forward(d.g, d.in, d.weight, d.bias, d.out);
    } else {
      reference::conv_forward(d.g, d.in, d.weight, d.bias, d.out);
    }
    benchmark::DoNotOptimize(d.out.data());
  }
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  ConvData d(static_cast<std::size_t>(state.range(0)));
  const std::vector<double> grad_out = noise(d.g.out_size(), 7);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::conv_backward_input(d.g, grad_out, d.weight, d.grad_in);
      kernels::conv_backward_weight(d.g, grad_out, d.in, d.grad_weight, d.grad_bias);
    } else {
      reference::conv_backward_input(d.g, grad_out, d.weight, d.grad_in);
      reference::conv_backward_weight(d.g, grad_out, d.in, d.grad_weight, d.grad_bias);
    }
    benchmark::DoNotOptimize(d.grad_weight.data());
  }
}

template <bool Parallel>
void BM_DeformForward(benchmark::State& state) {
  DeformData d(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::deform_forward(d.g, d.frames, d.weights, d.offsets, d.out);
    } else {
      reference::deform_forward(d.g, d.frames, d.weights, d.offsets, d.out);
    }
    benchmark::DoNotOptimize(d.out.data());
  }
}

template <bool Parallel>
void BM_DeformBackward(benchmark::State& state) {
  DeformData d(static_cast<std::size_t>(state.range(0)));
  const std::vector<double> grad_out = noise(d.g.out_size(), 8);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::deform_backward(d.g, d.frames, d.weights, d.offsets, grad_out, d.grad_frames, d.grad_weights,
                               d.grad_offsets);
    } else {
      reference::deform_backward(d.g, d.frames, d.weights, d.offsets, grad_out, d.grad_frames, d.grad_weights,
                                 d.grad_offsets);
    }
    benchmark::DoNotOptimize(d.grad_offsets.data());
  }
}

}  // namespace

BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/openmp")->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/serial_ref")->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/openmp")->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/serial_ref")->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DeformForward<true>)->Name("deform_forward/openmp")->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DeformForward<false>)->Name("deform_forward/serial_ref")->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DeformBackward<true>)->Name("deform_backward/openmp")->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DeformBackward<false>)
    ->Name("deform_backward/serial_ref")
    ->Arg(32)
    ->Arg(64)
    ->Unit(benchmark::kMillisecond);

int main(int argc, char** argv) {
  benchmark::AddCustomContext("maevi_threads", std::to_string(configure_threads()));
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
