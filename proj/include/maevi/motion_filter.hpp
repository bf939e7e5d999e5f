#pragma once

#include <array>
#include <vector>

#include "maevi/voxelizer.hpp"

namespace maevi {

/// Per-interval [0, 1] weights [4, H, W]; channel i weights input frame i.
struct RegionFilter {
  Tensor weights;
  std::vector<double> sigmas;
};

/// [H, W] weights in [0, 1] used to re-weight the training loss.
struct LossFilter {
  Tensor weights;
};

inline constexpr double kNormalizeEps = 1e-8;
/// Gaussian taps reach ceil(kGaussianTruncation * sigma) pixels out.
inline constexpr double kGaussianTruncation = 5.0;

/// A[i, y, x] = sum over time bins of |V[i, b, y, x]|.
Tensor activity(const VoxelGrid& voxels);

/// Divides each [H, W] plane of a [N, H, W] stack by (plane max + 1e-8).
Tensor normalize_planes(const Tensor& stack);

/// Normalized 1-D Gaussian taps, radius ceil(kGaussianTruncation * sigma).
std::vector<double> gaussian_kernel(double sigma);

/// Separable Gaussian blur of every plane of [N, H, W], reflecting at the
/// border (d c b a | a b c d | d c b a).
Tensor gaussian_blur(const Tensor& stack, double sigma);

/// Blurs with each sigma in turn, then re-normalizes each plane to peak 1
/// and clamps to [0, 1].
RegionFilter gaussian_cascade(const Tensor& normalized, const std::vector<double>& sigmas);

/// activity -> normalize_planes -> gaussian_cascade.
RegionFilter region_filter(const VoxelGrid& voxels, const std::vector<double>& sigmas);

/// All-ones filter; filtered frames equal the inputs.
RegionFilter ones_filter(std::size_t h, std::size_t w);

/// Frame i ([3, H, W]) times filter plane i, per channel.
std::array<Tensor, 4> apply_filter(const std::array<Tensor, 4>& frames, const RegionFilter& filter);

/// Mean of the planes adjacent to the target frame (E_-1->0 and E_0->1).
LossFilter loss_filter(const RegionFilter& filter);

}  // namespace maevi
