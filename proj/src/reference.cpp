#include "maevi/reference.hpp"

#include <cmath>

namespace maevi::reference {

using kernels::ConvGeometry;
using kernels::DeformGeometry;

namespace {

// Input coordinate for output o and kernel tap k, or -1 when in padding.
long in_coord(std::size_t o, std::size_t k, std::size_t stride, std::size_t pad,
              std::size_t extent) {
  const long v = static_cast<long>(o * stride + k) - static_cast<long>(pad);
  return (v < 0 || v >= static_cast<long>(extent)) ? -1 : v;
}

}  // namespace

std::vector<double> im2col(const ConvGeometry& g, std::span<const double> in) {
  const std::size_t OT = g.out_t(), OH = g.out_h(), OW = g.out_w();
  const std::size_t cols = OT * OH * OW;
  std::vector<double> m(g.c_in * g.kt * g.kh * g.kw * cols, 0.0);
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < g.c_in; ++ci)
    for (std::size_t a = 0; a < g.kt; ++a)
      for (std::size_t b = 0; b < g.kh; ++b)
        for (std::size_t c = 0; c < g.kw; ++c, ++row) {
          double* r = m.data() + row * cols;
          for (std::size_t ot = 0; ot < OT; ++ot) {
            const long it = in_coord(ot, a, g.stride_t, g.pad_t, g.t);
            if (it < 0) continue;
            for (std::size_t oy = 0; oy < OH; ++oy) {
              const long iy = in_coord(oy, b, g.stride, g.pad, g.h);
              if (iy < 0) continue;
              for (std::size_t ox = 0; ox < OW; ++ox) {
                const long ix = in_coord(ox, c, g.stride, g.pad, g.w);
                if (ix < 0) continue;
                r[(ot * OH + oy) * OW + ox] = in[((ci * g.t + it) * g.h + iy) * g.w + ix];
              }
            }
          }
        }
  return m;
}

void col2im(const ConvGeometry& g, std::span<const double> m, std::span<double> in) {
  const std::size_t OT = g.out_t(), OH = g.out_h(), OW = g.out_w();
  const std::size_t cols = OT * OH * OW;
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < g.c_in; ++ci)
    for (std::size_t a = 0; a < g.kt; ++a)
      for (std::size_t b = 0; b < g.kh; ++b)
        for (std::size_t c = 0; c < g.kw; ++c, ++row) {
          const double* r = m.data() + row * cols;
          for (std::size_t ot = 0; ot < OT; ++ot) {
            const long it = in_coord(ot, a, g.stride_t, g.pad_t, g.t);
            if (it < 0) continue;
            for (std::size_t oy = 0; oy < OH; ++oy) {
              const long iy = in_coord(oy, b, g.stride, g.pad, g.h);
              if (iy < 0) continue;
              for (std::size_t ox = 0; ox < OW; ++ox) {
                const long ix = in_coord(ox, c, g.stride, g.pad, g.w);
                if (ix < 0) continue;
                in[((ci * g.t + it) * g.h + iy) * g.w + ix] += r[(ot * OH + oy) * OW + ox];
              }
            }
          }
        }
}

void conv_forward(const ConvGeometry& g, std::span<const double> in,
                  std::span<const double> weight, std::span<const double> bias,
                  std::span<double> out) {
  const auto cols = im2col(g, in);
  const std::size_t K = g.c_in * g.kt * g.kh * g.kw;
  const std::size_t P = g.out_t() * g.out_h() * g.out_w();
  for (std::size_t co = 0; co < g.c_out; ++co) {
    double* o = out.data() + co * P;
    for (std::size_t p = 0; p < P; ++p) o[p] = bias.empty() ? 0.0 : bias[co];
    for (std::size_t k = 0; k < K; ++k) {
      const double wv = weight[co * K + k];
      const double* r = cols.data() + k * P;
      for (std::size_t p = 0; p < P; ++p) o[p] += wv * r[p];
    }
  }
}

void conv_backward_input(const ConvGeometry& g, std::span<const double> grad_out,
                         std::span<const double> weight, std::span<double> grad_in) {
  const std::size_t K = g.c_in * g.kt * g.kh * g.kw;
  const std::size_t P = g.out_t() * g.out_h() * g.out_w();
  std::vector<double> cols(K * P, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    double* r = cols.data() + k * P;
    for (std::size_t co = 0; co < g.c_out; ++co) {
      const double wv = weight[co * K + k];
      const double* go = grad_out.data() + co * P;
      for (std::size_t p = 0; p < P; ++p) r[p] += wv * go[p];
    }
  }
  col2im(g, cols, grad_in);
}

void conv_backward_weight(const ConvGeometry& g, std::span<const double> grad_out,
                          std::span<const double> in, std::span<double> grad_weight,
                          std::span<double> grad_bias) {
  const std::size_t K = g.c_in * g.kt * g.kh * g.kw;
  const std::size_t P = g.out_t() * g.out_h() * g.out_w();
  const auto cols = im2col(g, in);
  for (std::size_t co = 0; co < g.c_out; ++co) {
    const double* go = grad_out.data() + co * P;
    if (!grad_bias.empty()) {
      double acc = 0.0;
      for (std::size_t p = 0; p < P; ++p) acc += go[p];
      grad_bias[co] += acc;
    }
    if (grad_weight.empty()) continue;
    for (std::size_t k = 0; k < K; ++k) {
      const double* r = cols.data() + k * P;
      double acc = 0.0;
      for (std::size_t p = 0; p < P; ++p) acc += go[p] * r[p];
      grad_weight[co * K + k] += acc;
    }
  }
}

namespace {

struct Sample {
  double value;
  double dy, dx;
};

// Clamp-to-border bilinear read with explicit neighbour gathering.
Sample sample_plane(const double* p, std::size_t h, std::size_t w, double y, double x) {
  const double ymax = static_cast<double>(h) - 1.0, xmax = static_cast<double>(w) - 1.0;
  const bool free_y = y > 0.0 && y < ymax;
  const bool free_x = x > 0.0 && x < xmax;
  y = std::fmin(std::fmax(y, 0.0), ymax);
  x = std::fmin(std::fmax(x, 0.0), xmax);
  const double fy = std::floor(y), fx = std::floor(x);
  const auto y0 = static_cast<std::size_t>(fy), x0 = static_cast<std::size_t>(fx);
  const std::size_t y1 = y0 + 1 < h ? y0 + 1 : y0;
  const std::size_t x1 = x0 + 1 < w ? x0 + 1 : x0;
  const double ly = y - fy, lx = x - fx;
  const double a = p[y0 * w + x0], b = p[y0 * w + x1], c = p[y1 * w + x0], d = p[y1 * w + x1];
  Sample s;
  s.value = a + lx * (b - a) + ly * (c - a) + lx * ly * (a - b - c + d);
  s.dy = free_y ? (c - a) + lx * (a - b - c + d) : 0.0;
  s.dx = free_x ? (b - a) + ly * (a - b - c + d) : 0.0;
  return s;
}

}  // namespace

void deform_forward(const DeformGeometry& g, std::span<const double> frames,
                    std::span<const double> weights, std::span<const double> offsets,
                    std::span<double> out) {
  const std::size_t plane = g.h * g.w, F = g.taps();
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t y = 0; y < g.h; ++y)
      for (std::size_t x = 0; x < g.w; ++x) {
        const std::size_t pix = y * g.w + x;
        double acc = 0.0;
        for (std::size_t i = 0; i < g.n_frames; ++i)
          for (std::size_t k = 0; k < F; ++k) {
            const double sy = y + g.grid[k][0] + offsets[((i * F + k) * 2) * plane + pix];
            const double sx = x + g.grid[k][1] + offsets[((i * F + k) * 2 + 1) * plane + pix];
            const auto s = sample_plane(frames.data() + (i * g.channels + c) * plane, g.h, g.w,
                                        sy, sx);
            acc += weights[(i * F + k) * plane + pix] * s.value;
          }
        out[c * plane + pix] = acc;
      }
}

void deform_backward(const DeformGeometry& g, std::span<const double> frames,
                     std::span<const double> weights, std::span<const double> offsets,
                     std::span<const double> grad_out, std::span<double> grad_frames,
                     std::span<double> grad_weights, std::span<double> grad_offsets) {
  const std::size_t plane = g.h * g.w, F = g.taps();
  for (std::size_t i = 0; i < g.n_frames; ++i)
    for (std::size_t k = 0; k < F; ++k)
      for (std::size_t y = 0; y < g.h; ++y)
        for (std::size_t x = 0; x < g.w; ++x) {
          const std::size_t pix = y * g.w + x;
          const std::size_t wi = (i * F + k) * plane + pix;
          const std::size_t oyi = ((i * F + k) * 2) * plane + pix;
          const std::size_t oxi = oyi + plane;
          const double sy = y + g.grid[k][0] + offsets[oyi];
          const double sx = x + g.grid[k][1] + offsets[oxi];
          for (std::size_t c = 0; c < g.channels; ++c) {
            const double* fp = frames.data() + (i * g.channels + c) * plane;
            const double go = grad_out[c * plane + pix];
            const auto s = sample_plane(fp, g.h, g.w, sy, sx);
            if (!grad_weights.empty()) grad_weights[wi] += go * s.value;
            if (!grad_offsets.empty()) {
              grad_offsets[oyi] += go * weights[wi] * s.dy;
              grad_offsets[oxi] += go * weights[wi] * s.dx;
            }
            if (!grad_frames.empty()) {
              const auto tap = kernels::bilinear_tap(g.h, g.w, sy, sx);
              double* gp = grad_frames.data() + (i * g.channels + c) * plane;
              const double sc = go * weights[wi];
              gp[tap.i00] += sc * tap.w00;
              gp[tap.i01] += sc * tap.w01;
              gp[tap.i10] += sc * tap.w10;
              gp[tap.i11] += sc * tap.w11;
            }
          }
        }
}

}  // namespace maevi::reference
