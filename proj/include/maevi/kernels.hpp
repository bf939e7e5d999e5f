#pragma once

// Raw numeric kernels behind the differentiable ops. These are the
// OpenMP-parallel versions; maevi/reference.hpp holds serial counterparts
// built on a different algorithm, kept for testing and benchmarking.
//
// Every kernel partitions work so that each output element (or gradient
// element) is written by exactly one thread in a fixed summation order,
// which makes results independent of the thread count.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace maevi::kernels {

/// Convolution geometry. conv2d is the T = 1, kt = 1 special case.
struct ConvGeometry {
  std::size_t c_in = 1, t = 1, h = 1, w = 1;
  std::size_t c_out = 1, kt = 1, kh = 1, kw = 1;
  std::size_t stride_t = 1, stride = 1;
  std::size_t pad_t = 0, pad = 0;

  std::size_t out_t() const { return (t + 2 * pad_t - kt) / stride_t + 1; }
  std::size_t out_h() const { return (h + 2 * pad - kh) / stride + 1; }
  std::size_t out_w() const { return (w + 2 * pad - kw) / stride + 1; }
  std::size_t in_size() const { return c_in * t * h * w; }
  std::size_t out_size() const { return c_out * out_t() * out_h() * out_w(); }
  std::size_t weight_size() const { return c_out * c_in * kt * kh * kw; }
};

/// out = conv(in, weight) + bias. `bias` may be empty.
void conv_forward(const ConvGeometry& g, std::span<const double> in,
                  std::span<const double> weight, std::span<const double> bias,
                  std::span<double> out);
/// grad_in += conv_transpose(grad_out, weight).
void conv_backward_input(const ConvGeometry& g, std::span<const double> grad_out,
                         std::span<const double> weight, std::span<double> grad_in);
/// grad_weight += correlation of grad_out with in; grad_bias += sum of grad_out.
/// Either output span may be empty to skip it.
void conv_backward_weight(const ConvGeometry& g, std::span<const double> grad_out,
                          std::span<const double> in, std::span<double> grad_weight,
                          std::span<double> grad_bias);

/// Bilinear read of one plane at (y, x), coordinates clamped to the border.
struct BilinearTap {
  std::size_t i00, i01, i10, i11;  // flat indices of the four neighbours
  double w00, w01, w10, w11;       // interpolation weights
  double gate_y, gate_x;           // 0 where the coordinate was clamped
  double ly, lx;                   // fractional parts
};

inline BilinearTap bilinear_tap(std::size_t h, std::size_t w, double y, double x) {
  BilinearTap tap{};
  const double ymax = static_cast<double>(h - 1);
  const double xmax = static_cast<double>(w - 1);
  tap.gate_y = (y > 0.0 && y < ymax) ? 1.0 : 0.0;
  tap.gate_x = (x > 0.0 && x < xmax) ? 1.0 : 0.0;
  const double yc = std::clamp(y, 0.0, ymax);
  const double xc = std::clamp(x, 0.0, xmax);
  const auto y0 = static_cast<std::size_t>(std::floor(yc));
  const auto x0 = static_cast<std::size_t>(std::floor(xc));
  const std::size_t y1 = std::min(y0 + 1, h - 1);
  const std::size_t x1 = std::min(x0 + 1, w - 1);
  tap.ly = yc - static_cast<double>(y0);
  tap.lx = xc - static_cast<double>(x0);
  tap.i00 = y0 * w + x0;
  tap.i01 = y0 * w + x1;
  tap.i10 = y1 * w + x0;
  tap.i11 = y1 * w + x1;
  tap.w00 = (1.0 - tap.ly) * (1.0 - tap.lx);
  tap.w01 = (1.0 - tap.ly) * tap.lx;
  tap.w10 = tap.ly * (1.0 - tap.lx);
  tap.w11 = tap.ly * tap.lx;
  return tap;
}

inline double bilinear_read(const double* plane, const BilinearTap& t) {
  return t.w00 * plane[t.i00] + t.w01 * plane[t.i01] + t.w10 * plane[t.i10] +
         t.w11 * plane[t.i11];
}

/// d(read)/dy and d(read)/dx for the tap.
inline std::array<double, 2> bilinear_read_grad(const double* plane, const BilinearTap& t) {
  const double a = plane[t.i00], b = plane[t.i01], c = plane[t.i10], d = plane[t.i11];
  const double dy = ((1.0 - t.lx) * (c - a) + t.lx * (d - b)) * t.gate_y;
  const double dx = ((1.0 - t.ly) * (b - a) + t.ly * (d - c)) * t.gate_x;
  return {dy, dx};
}

/// Deformable multi-frame synthesis geometry.
/// frames [n_frames, channels, h, w]; weights [n_frames, taps, h, w];
/// offsets [n_frames, taps, 2, h, w] (dy, dx); out [channels, h, w].
struct DeformGeometry {
  std::size_t n_frames = 4, channels = 3, h = 1, w = 1;
  std::vector<std::array<double, 2>> grid;  // fixed tap positions (dy, dx)

  std::size_t taps() const { return grid.size(); }
  std::size_t frames_size() const { return n_frames * channels * h * w; }
  std::size_t weights_size() const { return n_frames * taps() * h * w; }
  std::size_t offsets_size() const { return n_frames * taps() * 2 * h * w; }
  std::size_t out_size() const { return channels * h * w; }
};

/// Square tap grid of side k centred on the output pixel (k odd).
std::vector<std::array<double, 2>> square_grid(std::size_t k);

void deform_forward(const DeformGeometry& g, std::span<const double> frames,
                    std::span<const double> weights, std::span<const double> offsets,
                    std::span<double> out);
/// Accumulates into the non-empty gradient spans.
void deform_backward(const DeformGeometry& g, std::span<const double> frames,
                     std::span<const double> weights, std::span<const double> offsets,
                     std::span<const double> grad_out, std::span<double> grad_frames,
                     std::span<double> grad_weights, std::span<double> grad_offsets);

/// Bilinear upsampling of [c, h, w] by an integer factor, half-pixel centres.
void upsample_forward(std::size_t c, std::size_t h, std::size_t w, std::size_t factor,
                      std::span<const double> in, std::span<double> out);
void upsample_backward(std::size_t c, std::size_t h, std::size_t w, std::size_t factor,
                       std::span<const double> grad_out, std::span<double> grad_in);

}  // namespace maevi::kernels
