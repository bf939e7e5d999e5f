#pragma once

#include <array>
#include <random>
#include <vector>

#include "maevi/encoder.hpp"
#include "maevi/kernels.hpp"

namespace maevi {

/// Per-pixel deformable kernel over the four input frames.
/// weights [4, F, H, W] (softmax-normalized jointly over frame and tap),
/// offsets [4, F, 2, H, W] in pixels (dy, dx).
struct DeformKernel {
  Tensor weights;
  Tensor offsets;
};

/// Channel values of image [C, H, W] at (y, x), bilinear, clamped to the border.
std::vector<double> bilinear_sample(const Tensor& image, double y, double x);
/// d/dy and d/dx of each channel sample, as [C][2]. Zero along an axis where
/// the coordinate was clamped.
std::vector<std::array<double, 2>> bilinear_sample_grad(const Tensor& image, double y, double x);

/// out(c, y, x) = sum_i sum_k w[i,k,y,x] * frames[i](c, y + g_k.y + dy, x + g_k.x + dx)
/// for frames [4, 3, H, W]. Differentiable in frames, weights and offsets.
Tensor deformable_synthesize(const Tensor& frames, const DeformKernel& kernel,
                             const std::vector<std::array<double, 2>>& grid);

/// Decomposes frames [4, 3, H, W] into bands at scales 1, 1/2, 1/4 such that
/// full + up2(half) + up4(quarter) reproduces the frames exactly.
std::array<Tensor, 3> frame_pyramid(const Tensor& frames);

/// Bilinear upsample of half (x2) and quarter (x4), summed with full.
Tensor fuse_scales(const Tensor& full, const Tensor& half, const Tensor& quarter);

/// Kernel-predicting head of one SynBlock: 3x3 conv + leaky ReLU, then a
/// zero-initialized 1x1 conv producing 4F weight logits and 8F offsets.
struct SynBlock {
  Tensor w_hidden, b_hidden;
  Tensor w_head, b_head;
  std::size_t kernel_side = 3;
  double max_offset = 8.0;

  std::size_t taps() const { return kernel_side * kernel_side; }
  void collect(ParameterList& out, const std::string& prefix) const;
  static SynBlock create(std::size_t feature_channels, std::size_t hidden, std::size_t kernel_side,
                         double max_offset, std::mt19937_64& rng);
};

/// Kernel predicted from features [Cf, h, w] and frames [4, 3, h, w].
DeformKernel predict_kernel(const Tensor& features, const Tensor& frames, const SynBlock& block);

/// One SynBlock: predict the kernel, then synthesize [3, h, w].
Tensor synblock(const Tensor& features, const Tensor& frames, const SynBlock& block,
                DeformKernel* kernel_out = nullptr);

struct BranchOutput {
  std::array<Tensor, 3> scales;  // full, half, quarter
  Tensor fused;                  // unclamped
};

/// Three SynBlocks over the frame pyramid of `frames` ([4, 3, H, W]).
BranchOutput forward_branch(const FeatureMaps& features, const Tensor& frames,
                            const std::array<SynBlock, 3>& blocks);

/// Stacks four [3, H, W] frames into [4, 3, H, W].
Tensor stack_frames(const std::array<Tensor, 4>& frames);

}  // namespace maevi
