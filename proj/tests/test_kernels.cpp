#include <gtest/gtest.h>
#include <omp.h>

#include "maevi/kernels.hpp"
#include "maevi/reference.hpp"
#include "oracles.hpp"

using namespace maevi;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

kernels::ConvGeometry random_geometry(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> small(1, 4), big(3, 9), stride(1, 2), coin(0, 1);
  kernels::ConvGeometry g;
  g.c_in = small(rng);
  g.c_out = small(rng);
  g.t = coin(rng) ? 1 : small(rng) + 1;
  g.h = big(rng);
  g.w = big(rng);
  g.kh = g.kw = coin(rng) ? 3 : 1;
  g.kt = g.t == 1 ? 1 : (coin(rng) ? 3 : 1);
  g.stride = stride(rng);
  g.pad = g.kh / 2;
  g.pad_t = g.kt / 2;
  return g;
}

struct ThreadCount {
  explicit ThreadCount(int n) : saved(omp_get_max_threads()) { omp_set_num_threads(n); }
  ~ThreadCount() { omp_set_num_threads(saved); }
  int saved;
};

}  // namespace

TEST(Kernels, ConvForwardMatchesReferenceAndOracle) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = random_geometry(rng);
    const auto in = random_vec(g.in_size(), rng);
    const auto w = random_vec(g.weight_size(), rng);
    const auto b = random_vec(g.c_out, rng);
    std::vector<double> fast(g.out_size()), ref(g.out_size());
    kernels::conv_forward(g, in, w, b, fast);
    reference::conv_forward(g, in, w, b, ref);
    const auto direct = oracle::conv(in, g.c_in, g.t, g.h, g.w, w, g.c_out, g.kt, g.kh, &b, g.stride,
                                     g.pad_t, g.pad);
    EXPECT_LT(oracle::max_abs_diff(fast, direct), 1e-12);
    EXPECT_LT(oracle::max_abs_diff(ref, direct), 1e-12);
  }
}

TEST(Kernels, ConvBackwardMatchesReference) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = random_geometry(rng);
    const auto in = random_vec(g.in_size(), rng);
    const auto w = random_vec(g.weight_size(), rng);
    const auto go = random_vec(g.out_size(), rng);
    std::vector<double> gi(g.in_size(), 0.0), gi_ref(g.in_size(), 0.0);
    std::vector<double> gw(g.weight_size(), 0.0), gw_ref(g.weight_size(), 0.0);
    std::vector<double> gb(g.c_out, 0.0), gb_ref(g.c_out, 0.0);
    kernels::conv_backward_input(g, go, w, gi);
    reference::conv_backward_input(g, go, w, gi_ref);
    kernels::conv_backward_weight(g, go, in, gw, gb);
    reference::conv_backward_weight(g, go, in, gw_ref, gb_ref);
    EXPECT_LT(oracle::max_abs_diff(gi, gi_ref), 1e-12);
    EXPECT_LT(oracle::max_abs_diff(gw, gw_ref), 1e-12);
    EXPECT_LT(oracle::max_abs_diff(gb, gb_ref), 1e-12);
  }
}

TEST(Kernels, DeformMatchesReference) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> off(-3.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    kernels::DeformGeometry g;
    g.n_frames = 4;
    g.channels = 3;
    g.h = 5 + trial % 4;
    g.w = 6 + trial % 3;
    g.grid = kernels::square_grid(3);
    const std::size_t F = g.taps(), plane = g.h * g.w;
    const auto frames = random_vec(g.n_frames * g.channels * plane, rng);
    const auto weights = random_vec(g.n_frames * F * plane, rng);
    std::vector<double> offsets(g.n_frames * F * 2 * plane);
    for (double& o : offsets) o = off(rng);
    std::vector<double> out(g.out_size()), out_ref(g.out_size());
    kernels::deform_forward(g, frames, weights, offsets, out);
    reference::deform_forward(g, frames, weights, offsets, out_ref);
    EXPECT_LT(oracle::max_abs_diff(out, out_ref), 1e-12);

    const auto go = random_vec(g.out_size(), rng);
    std::vector<double> gf(frames.size(), 0.0), gw(weights.size(), 0.0), gof(offsets.size(), 0.0);
    std::vector<double> gf_r(frames.size(), 0.0), gw_r(weights.size(), 0.0), go_r(offsets.size(), 0.0);
    kernels::deform_backward(g, frames, weights, offsets, go, gf, gw, gof);
    reference::deform_backward(g, frames, weights, offsets, go, gf_r, gw_r, go_r);
    EXPECT_LT(oracle::max_abs_diff(gf, gf_r), 1e-12);
    EXPECT_LT(oracle::max_abs_diff(gw, gw_r), 1e-12);
    EXPECT_LT(oracle::max_abs_diff(gof, go_r), 1e-12);
  }
}

TEST(Kernels, ResultsDoNotDependOnThreadCount) {
  std::mt19937_64 rng(24);
  kernels::ConvGeometry g;
  g.c_in = 3;
  g.c_out = 5;
  g.t = 4;
  g.h = g.w = 12;
  g.kt = g.kh = g.kw = 3;
  g.pad = g.pad_t = 1;
  const auto in = random_vec(g.in_size(), rng);
  const auto w = random_vec(g.weight_size(), rng);
  const auto go = random_vec(g.out_size(), rng);
  const auto run = [&](int threads) {
    ThreadCount tc(threads);
    std::vector<double> out(g.out_size()), gi(g.in_size(), 0.0), gw(g.weight_size(), 0.0);
    kernels::conv_forward(g, in, w, {}, out);
    kernels::conv_backward_input(g, go, w, gi);
    kernels::conv_backward_weight(g, go, in, gw, {});
    out.insert(out.end(), gi.begin(), gi.end());
    out.insert(out.end(), gw.begin(), gw.end());
    return out;
  };
  EXPECT_EQ(run(1), run(3));
}
