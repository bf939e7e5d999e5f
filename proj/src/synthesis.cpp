#include "maevi/synthesis.hpp"

#include "maevi/ops.hpp"

namespace maevi {

std::vector<double> bilinear_sample(const Tensor& image, double y, double x) {
  if (image.ndim() != 3) throw ShapeError("bilinear_sample: expected [C, H, W]");
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  const auto tap = kernels::bilinear_tap(H, W, y, x);
  std::vector<double> out(C);
  for (std::size_t c = 0; c < C; ++c) out[c] = kernels::bilinear_read(image.data().data() + c * H * W, tap);
  return out;
}

std::vector<std::array<double, 2>> bilinear_sample_grad(const Tensor& image, double y, double x) {
  if (image.ndim() != 3) throw ShapeError("bilinear_sample_grad: expected [C, H, W]");
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  const auto tap = kernels::bilinear_tap(H, W, y, x);
  std::vector<std::array<double, 2>> out(C);
  for (std::size_t c = 0; c < C; ++c) {
    out[c] = kernels::bilinear_read_grad(image.data().data() + c * H * W, tap);
  }
  return out;
}

Tensor deformable_synthesize(const Tensor& frames, const DeformKernel& kernel,
                             const std::vector<std::array<double, 2>>& grid) {
  if (frames.ndim() != 4) throw ShapeError("deformable_synthesize: frames must be [N, C, H, W]");
  kernels::DeformGeometry g;
  g.n_frames = frames.dim(0);
  g.channels = frames.dim(1);
  g.h = frames.dim(2);
  g.w = frames.dim(3);
  g.grid = grid;
  const Shape wshape{g.n_frames, g.taps(), g.h, g.w};
  const Shape oshape{g.n_frames, g.taps(), 2, g.h, g.w};
  if (kernel.weights.shape() != wshape) {
    throw ShapeError("deformable_synthesize: weights " + shape_str(kernel.weights.shape()) +
                     ", expected " + shape_str(wshape));
  }
  if (kernel.offsets.shape() != oshape) {
    throw ShapeError("deformable_synthesize: offsets " + shape_str(kernel.offsets.shape()) +
                     ", expected " + shape_str(oshape));
  }
  std::vector<double> out(g.out_size());
  kernels::deform_forward(g, frames.data(), kernel.weights.data(), kernel.offsets.data(), out);
  const Tensor w = kernel.weights, off = kernel.offsets;
  return detail::make_result(
      "deformable_synthesize", {g.channels, g.h, g.w}, std::move(out), {frames, w, off},
      [g, frames, w, off](const TensorImpl& o) {
        std::vector<double> gf(frames.requires_grad() ? frames.numel() : 0, 0.0);
        std::vector<double> gw(w.requires_grad() ? w.numel() : 0, 0.0);
        std::vector<double> go(off.requires_grad() ? off.numel() : 0, 0.0);
        kernels::deform_backward(g, frames.data(), w.data(), off.data(), o.grad, gf, gw, go);
        if (!gf.empty()) frames.impl_ptr()->accumulate_grad(gf);
        if (!gw.empty()) w.impl_ptr()->accumulate_grad(gw);
        if (!go.empty()) off.impl_ptr()->accumulate_grad(go);
      });
}

std::array<Tensor, 3> frame_pyramid(const Tensor& frames) {
  if (frames.ndim() != 4) throw ShapeError("frame_pyramid: frames must be [N, C, H, W]");
  const std::size_t N = frames.dim(0), C = frames.dim(1), H = frames.dim(2), W = frames.dim(3);
  if (H % 4 != 0 || W % 4 != 0) throw ShapeError("frame_pyramid: H and W must be divisible by 4");
  const Tensor g0 = reshape(frames, {N * C, H, W});
  const Tensor g1 = avg_pool2(g0);
  const Tensor g2 = avg_pool2(g1);
  const Tensor b2 = g2;
  const Tensor b1 = sub(g1, bilinear_upsample(g2, 2));
  const Tensor b0 = sub(sub(g0, bilinear_upsample(b1, 2)), bilinear_upsample(b2, 4));
  return {reshape(b0, {N, C, H, W}), reshape(b1, {N, C, H / 2, W / 2}),
          reshape(b2, {N, C, H / 4, W / 4})};
}

Tensor fuse_scales(const Tensor& full, const Tensor& half, const Tensor& quarter) {
  return add(add(full, bilinear_upsample(half, 2)), bilinear_upsample(quarter, 4));
}

void SynBlock::collect(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + "w_hidden", w_hidden});
  out.push_back({prefix + "b_hidden", b_hidden});
  out.push_back({prefix + "w_head", w_head});
  out.push_back({prefix + "b_head", b_head});
}

SynBlock SynBlock::create(std::size_t feature_channels, std::size_t hidden, std::size_t kernel_side,
                          double max_offset, std::mt19937_64& rng) {
  SynBlock b;
  b.kernel_side = kernel_side;
  b.max_offset = max_offset;
  const std::size_t c_in = feature_channels + 12;
  const std::size_t F = kernel_side * kernel_side;
  b.w_hidden = init_uniform({hidden, c_in, 3, 3}, c_in * 9, rng);
  b.b_hidden = init_uniform({hidden}, c_in * 9, rng);
  b.w_head = init_zeros({12 * F, hidden, 1, 1});
  b.b_head = init_zeros({12 * F});
  return b;
}

DeformKernel predict_kernel(const Tensor& features, const Tensor& frames, const SynBlock& block) {
  if (features.ndim() != 3 || frames.ndim() != 4 || frames.dim(0) != 4 || frames.dim(1) != 3 ||
      features.dim(1) != frames.dim(2) || features.dim(2) != frames.dim(3)) {
    throw ShapeError("synblock: features " + shape_str(features.shape()) + " and frames " +
                     shape_str(frames.shape()) + " are not aligned");
  }
  const std::size_t h = features.dim(1), w = features.dim(2), F = block.taps();
  const Tensor input = concat({features, reshape(frames, {12, h, w})});
  const Tensor hidden = leaky_relu(conv2d(input, block.w_hidden, block.b_hidden));
  const Tensor head = conv2d(hidden, block.w_head, block.b_head);
  DeformKernel k;
  k.weights = reshape(softmax(slice(head, 0, 4 * F), 0), {4, F, h, w});
  k.offsets = reshape(scale(tanh(slice(head, 4 * F, 12 * F)), block.max_offset), {4, F, 2, h, w});
  return k;
}

Tensor synblock(const Tensor& features, const Tensor& frames, const SynBlock& block,
                DeformKernel* kernel_out) {
  DeformKernel k = predict_kernel(features, frames, block);
  Tensor out = deformable_synthesize(frames, k, kernels::square_grid(block.kernel_side));
  if (kernel_out) *kernel_out = std::move(k);
  return out;
}

BranchOutput forward_branch(const FeatureMaps& features, const Tensor& frames,
                            const std::array<SynBlock, 3>& blocks) {
  const auto bands = frame_pyramid(frames);
  BranchOutput out;
  for (std::size_t s = 0; s < 3; ++s) out.scales[s] = synblock(features.maps[s], bands[s], blocks[s]);
  out.fused = fuse_scales(out.scales[0], out.scales[1], out.scales[2]);
  return out;
}

Tensor stack_frames(const std::array<Tensor, 4>& frames) {
  const Shape& s = frames[0].shape();
  if (s.size() != 3) throw ShapeError("stack_frames: frames must be [C, H, W]");
  for (const auto& f : frames) {
    if (f.shape() != s) throw ShapeError("stack_frames: frame shapes differ");
  }
  return reshape(concat({frames[0], frames[1], frames[2], frames[3]}), {4, s[0], s[1], s[2]});
}

}  // namespace maevi
