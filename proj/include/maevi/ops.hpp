#pragma once

// Differentiable tensor operations. Binary ops accept identical shapes or
// a scalar (rank-0) operand; nothing else broadcasts implicitly.

#include <optional>
#include <vector>

#include "maevi/tensor.hpp"

namespace maevi {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.1);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
/// Values outside [lo, hi] are clamped and pass no gradient.
Tensor clamp(const Tensor& a, double lo, double hi);

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& a, std::size_t axis);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// mean(|a - b|). The subgradient at a == b is 0.
Tensor l1_mean(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& a, Shape shape);
/// Concatenation along axis 0; trailing dims must agree.
Tensor concat(const std::vector<Tensor>& parts);
/// Rows [begin, end) of axis 0.
Tensor slice(const Tensor& a, std::size_t begin, std::size_t end);
/// a[c, ...] * plane[...] for every leading index c.
Tensor mul_plane(const Tensor& a, const Tensor& plane);

/// 2-D cross-correlation. input [C_in, H, W], weight [C_out, C_in, k, k],
/// bias [C_out] or undefined. Kernel size must be odd; padding defaults to
/// (k - 1) / 2.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              std::size_t stride = 1, std::optional<std::size_t> padding = std::nullopt);
/// 3-D cross-correlation. input [C_in, T, H, W], weight [C_out, C_in, kt, k, k].
/// Default padding is (kt - 1) / 2 temporally and (k - 1) / 2 spatially; an
/// explicit padding applies to all three axes.
Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              std::size_t stride = 1, std::optional<std::size_t> padding = std::nullopt);

/// Bilinear upsampling of [C, H, W] by an integer factor (half-pixel centres,
/// edge clamped), so constant images stay constant.
Tensor bilinear_upsample(const Tensor& a, std::size_t factor);
/// 2x2 box average of [C, H, W]; H and W must be even.
Tensor avg_pool2(const Tensor& a);

}  // namespace maevi
