#include "maevi/motion_filter.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "maevi/ops.hpp"

namespace maevi {

Tensor activity(const VoxelGrid& voxels) {
  const Tensor& v = voxels.data;
  if (v.ndim() != 4) throw ShapeError("activity: voxel grid must be [4, T, H, W]");
  const std::size_t N = v.dim(0), T = v.dim(1), plane = v.dim(2) * v.dim(3);
  Tensor a({N, v.dim(2), v.dim(3)});
  auto src = v.data();
  auto dst = a.data();
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t b = 0; b < T; ++b)
      for (std::size_t p = 0; p < plane; ++p) dst[i * plane + p] += std::abs(src[(i * T + b) * plane + p]);
  return a;
}

Tensor normalize_planes(const Tensor& stack) {
  if (stack.ndim() != 3) throw ShapeError("normalize_planes: expected [N, H, W]");
  Tensor out = stack.detach();
  const std::size_t plane = stack.dim(1) * stack.dim(2);
  auto d = out.data();
  for (std::size_t i = 0; i < stack.dim(0); ++i) {
    auto p = d.subspan(i * plane, plane);
    const double peak = *std::max_element(p.begin(), p.end());
    for (auto& x : p) x /= (peak + kNormalizeEps);
  }
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_kernel: sigma must be > 0");
  const auto r = static_cast<std::size_t>(std::ceil(kGaussianTruncation * sigma));
  std::vector<double> k(2 * r + 1);
  double total = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(r);
    k[i] = std::exp(-0.5 * d * d / (sigma * sigma));
    total += k[i];
  }
  for (auto& v : k) v /= total;
  return k;
}

namespace {

std::size_t reflect(long i, long n) {
  const long period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < n ? i : period - 1 - i);
}

}  // namespace

Tensor gaussian_blur(const Tensor& stack, double sigma) {
  if (stack.ndim() != 3) throw ShapeError("gaussian_blur: expected [N, H, W]");
  const auto k = gaussian_kernel(sigma);
  const long r = static_cast<long>(k.size() / 2);
  const long H = stack.dim(1), W = stack.dim(2);
  const std::size_t plane = H * W;
  Tensor tmp(stack.shape());
  Tensor out(stack.shape());
  auto src = stack.data();
  auto mid = tmp.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < stack.dim(0); ++i) {
    const double* s = src.data() + i * plane;
    double* m = mid.data() + i * plane;
    double* o = dst.data() + i * plane;
    for (long y = 0; y < H; ++y)
      for (long x = 0; x < W; ++x) {
        double acc = 0.0;
        for (long j = -r; j <= r; ++j) acc += k[j + r] * s[y * W + reflect(x + j, W)];
        m[y * W + x] = acc;
      }
    for (long y = 0; y < H; ++y)
      for (long x = 0; x < W; ++x) {
        double acc = 0.0;
        for (long j = -r; j <= r; ++j) acc += k[j + r] * m[reflect(y + j, H) * W + x];
        o[y * W + x] = acc;
      }
  }
  return out;
}

RegionFilter gaussian_cascade(const Tensor& normalized, const std::vector<double>& sigmas) {
  if (sigmas.empty()) throw std::invalid_argument("gaussian_cascade: no sigmas given");
  Tensor cur = normalized.detach();
  for (double s : sigmas) cur = gaussian_blur(cur, s);
  cur = normalize_planes(cur);
  for (auto& v : cur.data()) v = std::clamp(v, 0.0, 1.0);
  return {cur, sigmas};
}

RegionFilter region_filter(const VoxelGrid& voxels, const std::vector<double>& sigmas) {
  return gaussian_cascade(normalize_planes(activity(voxels)), sigmas);
}

RegionFilter ones_filter(std::size_t h, std::size_t w) { return {Tensor::ones({4, h, w}), {}}; }

std::array<Tensor, 4> apply_filter(const std::array<Tensor, 4>& frames, const RegionFilter& filter) {
  const Tensor& f = filter.weights;
  if (f.ndim() != 3 || f.dim(0) != 4) throw ShapeError("apply_filter: filter must be [4, H, W]");
  std::array<Tensor, 4> out;
  const std::size_t plane = f.dim(1) * f.dim(2);
  for (std::size_t i = 0; i < 4; ++i) {
    Tensor w({f.dim(1), f.dim(2)},
             std::vector<double>(f.data().begin() + i * plane, f.data().begin() + (i + 1) * plane));
    out[i] = mul_plane(frames[i], w);
  }
  return out;
}

LossFilter loss_filter(const RegionFilter& filter) {
  const Tensor& f = filter.weights;
  if (f.ndim() != 3 || f.dim(0) != 4) throw ShapeError("loss_filter: filter must be [4, H, W]");
  const std::size_t plane = f.dim(1) * f.dim(2);
  Tensor lf({f.dim(1), f.dim(2)});
  auto src = f.data();
  auto dst = lf.data();
  for (std::size_t p = 0; p < plane; ++p) dst[p] = 0.5 * (src[plane + p] + src[2 * plane + p]);
  return {lf};
}

}  // namespace maevi
