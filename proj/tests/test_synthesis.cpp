#include <gtest/gtest.h>

#include "maevi/event_sim.hpp"
#include "maevi/model.hpp"
#include "maevi/ops.hpp"
#include "oracles.hpp"

using namespace maevi;

namespace {

const auto kGrid = kernels::square_grid(3);

DeformKernel random_kernel(std::size_t h, std::size_t w, double max_offset, std::mt19937_64& rng) {
  const Tensor logits = oracle::random_tensor({36, h, w}, rng, -2.0, 2.0);
  DeformKernel k;
  k.weights = reshape(softmax(logits, 0), {4, 9, h, w}).detach();
  k.offsets = oracle::random_tensor({4, 9, 2, h, w}, rng, -max_offset, max_offset);
  return k;
}

void randomize(const ParameterList& params, std::mt19937_64& rng, double amplitude) {
  std::uniform_real_distribution<double> u(-amplitude, amplitude);
  for (const auto& p : params) {
    Tensor t = p.value;
    for (double& v : t.data()) v = u(rng);
  }
}

SceneSpec small_scene(int size) {
  return parse_scene(KeyValueConfig::from_string(
      "height = " + std::to_string(size) + "\nwidth = " + std::to_string(size) +
      "\nbackground = 0.2,0.3,0.4\n"
      "shape = rectangle 0.9,0.6,0.2 10,12 3,1 8,6\n"
      "shape = disk 0.1,0.8,0.5 22,20 -2,1 4\n"));
}

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.encoder.n_time_bins = 4;
  cfg.encoder.widths = {4, 4, 8};
  cfg.encoder.embed_dim = 4;
  cfg.hidden = 6;
  return cfg;
}

}  // namespace

TEST(BilinearSample, LatticeAndMidpoint) {
  std::mt19937_64 rng(91);
  const Tensor img = oracle::random_tensor({2, 4, 5}, rng);
  const auto v = bilinear_sample(img, 2.0, 3.0);
  EXPECT_EQ(v[0], img(0, 2, 3));
  EXPECT_EQ(v[1], img(1, 2, 3));
  const auto m = bilinear_sample(img, 1.5, 4.0);
  EXPECT_DOUBLE_EQ(m[0], (img(0, 1, 4) + img(0, 2, 4)) / 2.0);
  const auto clamped = bilinear_sample(img, -3.0, 9.0);
  EXPECT_EQ(clamped[1], img(1, 0, 4));
}

TEST(BilinearSample, CoordinateGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(92);
  const Tensor img = oracle::random_tensor({3, 6, 7}, rng);
  std::uniform_real_distribution<double> ry(0.1, 4.9), rx(0.1, 5.9);
  for (int trial = 0; trial < 20; ++trial) {
    double y = ry(rng), x = rx(rng);
    if (std::abs(y - std::round(y)) < 1e-3 || std::abs(x - std::round(x)) < 1e-3) continue;
    const auto g = bilinear_sample_grad(img, y, x);
    const double eps = 1e-6;
    for (std::size_t c = 0; c < 3; ++c) {
      const double dy = (bilinear_sample(img, y + eps, x)[c] - bilinear_sample(img, y - eps, x)[c]) / (2 * eps);
      const double dx = (bilinear_sample(img, y, x + eps)[c] - bilinear_sample(img, y, x - eps)[c]) / (2 * eps);
      EXPECT_NEAR(g[c][0], dy, 1e-8);
      EXPECT_NEAR(g[c][1], dx, 1e-8);
    }
  }
}

TEST(Deform, CentreTapOfOneFrameIsIdentity) {
  std::mt19937_64 rng(93);
  const Tensor frames = oracle::random_tensor({4, 3, 6, 5}, rng);
  DeformKernel k{Tensor({4, 9, 6, 5}), Tensor({4, 9, 2, 6, 5})};
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t x = 0; x < 5; ++x) k.weights(1, 4, y, x) = 1.0;
  const Tensor out = deformable_synthesize(frames, k, kGrid);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 6; ++y)
      for (std::size_t x = 0; x < 5; ++x) EXPECT_EQ(out(c, y, x), frames(1, c, y, x));
}

TEST(Deform, UniformWeightsAverageNeighbourhoods) {
  std::mt19937_64 rng(94);
  const Tensor frames = oracle::random_tensor({4, 3, 5, 6}, rng);
  const DeformKernel k{Tensor({4, 9, 5, 6}, 1.0 / 36.0), Tensor({4, 9, 2, 5, 6})};
  const Tensor out = deformable_synthesize(frames, k, kGrid);
  for (std::size_t c = 0; c < 3; ++c)
    for (long y = 0; y < 5; ++y)
      for (long x = 0; x < 6; ++x) {
        double s = 0.0;
        for (std::size_t i = 0; i < 4; ++i)
          for (long dy = -1; dy <= 1; ++dy)
            for (long dx = -1; dx <= 1; ++dx) {
              const long yy = std::clamp(y + dy, 0L, 4L), xx = std::clamp(x + dx, 0L, 5L);
              s += frames(i, c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
            }
        EXPECT_NEAR(out(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)), s / 36.0, 1e-14);
      }
}

TEST(Deform, MatchesBruteForceOracle) {
  std::mt19937_64 rng(95);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t h = 3 + trial % 5, w = 4 + trial % 4;
    const Tensor frames = oracle::random_tensor({4, 3, h, w}, rng);
    const DeformKernel k = random_kernel(h, w, 4.0, rng);
    EXPECT_LT(oracle::max_abs_diff(deformable_synthesize(frames, k, kGrid).data(),
                                   oracle::deform(frames, k.weights, k.offsets, 3)),
              1e-12);
  }
}

TEST(Deform, ConstantFramesAreReproduced) {
  std::mt19937_64 rng(96);
  std::uniform_real_distribution<double> value(-2.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const double v = value(rng);
    const DeformKernel k = random_kernel(7, 6, 8.0, rng);
    for (double o : oracle::values(deformable_synthesize(Tensor({4, 3, 7, 6}, v), k, kGrid))) EXPECT_NEAR(o, v, 1e-9);
  }
}

TEST(Deform, ShapeMismatchThrows) {
  std::mt19937_64 rng(97);
  const DeformKernel k = random_kernel(4, 4, 1.0, rng);
  EXPECT_THROW(deformable_synthesize(Tensor({4, 3, 4, 5}), k, kGrid), ShapeError);
  EXPECT_THROW(deformable_synthesize(Tensor({4, 3, 4, 4}), k, kernels::square_grid(5)), ShapeError);
}

TEST(Deform, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(98);
  Tensor frames = oracle::random_tensor({4, 3, 5, 5}, rng).set_requires_grad();
  DeformKernel k = random_kernel(5, 5, 2.5, rng);
  k.weights.set_requires_grad();
  k.offsets.set_requires_grad();
  const Tensor r = oracle::random_tensor({3, 5, 5}, rng);
  EXPECT_LT(oracle::gradient_error([&] { return sum(mul(deformable_synthesize(frames, k, kGrid), r)); },
                                   {frames, k.weights, k.offsets}, 60, rng),
            1e-5);
}

TEST(SynBlock, ZeroHeadAveragesNeighbourhoods) {
  std::mt19937_64 rng(99);
  const SynBlock block = SynBlock::create(5, 6, 3, 8.0, rng);
  const Tensor features = oracle::random_tensor({5, 6, 7}, rng);
  const Tensor frames = oracle::random_tensor({4, 3, 6, 7}, rng);
  DeformKernel k;
  const Tensor out = synblock(features, frames, block, &k);
  EXPECT_EQ(out.shape(), (Shape{3, 6, 7}));
  for (double w : k.weights.data()) EXPECT_NEAR(w, 1.0 / 36.0, 1e-15);
  for (double o : k.offsets.data()) EXPECT_EQ(o, 0.0);
  const DeformKernel uniform{Tensor({4, 9, 6, 7}, 1.0 / 36.0), Tensor({4, 9, 2, 6, 7})};
  EXPECT_LT(oracle::max_abs_diff(out.data(), deformable_synthesize(frames, uniform, kGrid).data()), 1e-14);
}

TEST(SynBlock, KernelIsNormalizedAndBounded) {
  std::mt19937_64 rng(100);
  SynBlock block = SynBlock::create(4, 6, 3, 2.0, rng);
  ParameterList params;
  block.collect(params, "");
  randomize(params, rng, 2.0);
  DeformKernel k;
  synblock(oracle::random_tensor({4, 5, 5}, rng), oracle::random_tensor({4, 3, 5, 5}, rng), block, &k);
  for (std::size_t p = 0; p < 25; ++p) {
    double s = 0.0;
    for (std::size_t j = 0; j < 36; ++j) s += k.weights.data()[j * 25 + p];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  for (double o : k.offsets.data()) EXPECT_LE(std::abs(o), 2.0);
  EXPECT_THROW(synblock(Tensor({4, 5, 6}), Tensor({4, 3, 5, 5}), block), ShapeError);
}

TEST(SynBlock, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(101);
  SynBlock block = SynBlock::create(3, 5, 3, 3.0, rng);
  ParameterList params;
  block.collect(params, "");
  randomize(params, rng, 0.4);
  Tensor features = oracle::random_tensor({3, 6, 6}, rng).set_requires_grad();
  Tensor frames = oracle::random_tensor({4, 3, 6, 6}, rng).set_requires_grad();
  const Tensor r = oracle::random_tensor({3, 6, 6}, rng);
  std::vector<Tensor> wrt{features, frames};
  for (const auto& np : params) wrt.push_back(np.value);
  EXPECT_LT(oracle::gradient_error([&] { return sum(mul(synblock(features, frames, block), r)); }, wrt, 30, rng),
            1e-5);
}

TEST(FuseScales, Cases) {
  std::mt19937_64 rng(102);
  const Tensor full = oracle::random_tensor({3, 8, 8}, rng);
  EXPECT_EQ(oracle::max_abs_diff(fuse_scales(full, Tensor({3, 4, 4}), Tensor({3, 2, 2})).data(), full.data()), 0.0);
  for (double v : oracle::values(fuse_scales(Tensor({3, 8, 8}, 0.1), Tensor({3, 4, 4}, 0.2), Tensor({3, 2, 2}, 0.3))))
    EXPECT_NEAR(v, 0.6, 1e-15);
  const Tensor half = oracle::random_tensor({3, 4, 4}, rng), quarter = oracle::random_tensor({3, 2, 2}, rng);
  const Tensor expected = add(add(full, bilinear_upsample(half, 2)), bilinear_upsample(quarter, 4));
  EXPECT_EQ(oracle::max_abs_diff(fuse_scales(full, half, quarter).data(), expected.data()), 0.0);
}

TEST(FramePyramid, BandsReconstructFrames) {
  std::mt19937_64 rng(103);
  const Tensor frames = oracle::random_tensor({4, 3, 12, 8}, rng, 0.0, 1.0);
  const auto bands = frame_pyramid(frames);
  EXPECT_EQ(bands[1].shape(), (Shape{4, 3, 6, 4}));
  EXPECT_EQ(bands[2].shape(), (Shape{4, 3, 3, 2}));
  for (std::size_t i = 0; i < 4; ++i) {
    const auto pick = [i](const Tensor& t) { return reshape(slice(t, i, i + 1), {3, t.dim(2), t.dim(3)}); };
    const Tensor back = fuse_scales(pick(bands[0]), pick(bands[1]), pick(bands[2]));
    EXPECT_LT(oracle::max_abs_diff(back.data(), pick(frames).data()), 1e-14);
  }
  EXPECT_THROW(frame_pyramid(Tensor({4, 3, 10, 8})), ShapeError);
}

TEST(Branches, OnesFilterAndTiedBranchesAgree) {
  ModelConfig cfg = small_config();
  cfg.filter = FilterMode::Ones;
  cfg.tie_branches = true;
  const Model model(cfg, 5);
  std::mt19937_64 rng(104);
  randomize(model.parameters(), rng, 0.3);
  const PreparedSample s = prepare_sample(make_sample(small_scene(32), "s"), cfg);
  const ModelOutput out = model.forward(s);
  EXPECT_EQ(oracle::max_abs_diff(out.standard.fused.data(), out.filtered.fused.data()), 0.0);
  const Tensor either = clamp(out.standard.fused, 0.0, 1.0);
  EXPECT_EQ(oracle::max_abs_diff(out.final_frame.data(), either.data()), 0.0);
  cfg.combine = BranchCombine::Mean;
  const Model mean_model(cfg, 5);
  randomize(mean_model.parameters(), rng, 0.3);
  const ModelOutput m = mean_model.forward(s);
  EXPECT_LT(oracle::max_abs_diff(m.final_frame.data(), clamp(m.standard.fused, 0.0, 1.0).data()), 1e-15);
}

TEST(Branches, FinalFrameShapeAndRange) {
  const ModelConfig cfg = small_config();
  const Model model(cfg, 6);
  std::mt19937_64 rng(105);
  randomize(model.parameters(), rng, 1.0);
  const ModelOutput out = model.forward(prepare_sample(make_sample(small_scene(32), "s"), cfg));
  EXPECT_EQ(out.final_frame.shape(), (Shape{3, 32, 32}));
  for (double v : out.final_frame.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Branches, ZeroHeadsReproduceFramesAverage) {
  const ModelConfig cfg = small_config();
  const Model model(cfg, 7);
  const PreparedSample s = prepare_sample(make_sample(small_scene(32), "s"), cfg);
  const ModelOutput out = model.forward(s);
  // Uniform kernels at every scale: the fused standard frame is the pyramid
  // reconstruction of the neighbourhood-averaged bands.
  const auto bands = frame_pyramid(s.frames);
  std::array<Tensor, 3> averaged;
  for (std::size_t k = 0; k < 3; ++k) {
    const std::size_t h = bands[k].dim(2), w = bands[k].dim(3);
    averaged[k] = deformable_synthesize(bands[k], {Tensor({4, 9, h, w}, 1.0 / 36.0), Tensor({4, 9, 2, h, w})}, kGrid);
  }
  EXPECT_LT(oracle::max_abs_diff(out.standard.fused.data(), fuse_scales(averaged[0], averaged[1], averaged[2]).data()),
            1e-12);
}

TEST(Branches, EndToEndGradientAt32) {
  const ModelConfig cfg = small_config();
  const Model model(cfg, 8);
  std::mt19937_64 rng(106);
  randomize(model.parameters(), rng, 0.3);
  const PreparedSample s = prepare_sample(make_sample(small_scene(32), "s"), cfg);
  const Tensor ra = oracle::random_tensor({3, 32, 32}, rng), rb = oracle::random_tensor({3, 32, 32}, rng);
  const auto loss = [&] {
    const ModelOutput out = model.forward(s);
    return add(sum(mul(out.standard.fused, ra)), sum(mul(out.filtered.fused, rb)));
  };
  std::vector<Tensor> wrt;
  for (const auto& np : model.parameters()) wrt.push_back(np.value);
  // Thousands of bilinear taps: a wider step straddles lattice lines too often.
  const auto check = oracle::screened_gradient_error(loss, wrt, 4, rng, 1e-6);
  EXPECT_LT(check.error, 1e-5);
  EXPECT_LE(check.kinked * 4, check.checked) << check.kinked << " of " << check.checked;
}
