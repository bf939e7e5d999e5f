#include "maevi/kernels.hpp"

#include <cstdint>

namespace maevi::kernels {

namespace {

using idx = std::ptrdiff_t;

// Output positions o in [lo, hi) whose input coordinate o*stride + k - pad
// falls inside [0, extent).
struct Range {
  idx lo, hi;
};

Range valid_range(idx out_extent, idx in_extent, idx stride, idx k, idx pad) {
  idx lo = 0;
  if (pad - k > 0) lo = (pad - k + stride - 1) / stride;
  idx hi = 0;
  const idx lim = in_extent + pad - k;  // need o*stride < lim
  if (lim > 0) hi = (lim - 1) / stride + 1;
  hi = std::min(hi, out_extent);
  if (hi < lo) hi = lo;
  return {lo, hi};
}

}  // namespace

void conv_forward(const ConvGeometry& g, std::span<const double> in,
                  std::span<const double> weight, std::span<const double> bias,
                  std::span<double> out) {
  const idx OT = g.out_t(), OH = g.out_h(), OW = g.out_w();
  const idx T = g.t, H = g.h, W = g.w;
  const idx KT = g.kt, KH = g.kh, KW = g.kw;
  const idx st = g.stride_t, s = g.stride, pt = g.pad_t, p = g.pad;
  const idx CI = g.c_in, CO = g.c_out;
  const double* src = in.data();
  const double* wt = weight.data();
  double* dst = out.data();
  const bool has_bias = !bias.empty();

#pragma omp parallel for schedule(static)
  for (idx co = 0; co < CO; ++co) {
    double* oc = dst + co * OT * OH * OW;
    std::fill(oc, oc + OT * OH * OW, has_bias ? bias[co] : 0.0);
    for (idx ci = 0; ci < CI; ++ci) {
      const double* ic = src + ci * T * H * W;
      for (idx a = 0; a < KT; ++a) {
        const Range rt = valid_range(OT, T, st, a, pt);
        for (idx b = 0; b < KH; ++b) {
          const Range ry = valid_range(OH, H, s, b, p);
          for (idx c = 0; c < KW; ++c) {
            const Range rx = valid_range(OW, W, s, c, p);
            const double wv = wt[(((co * CI + ci) * KT + a) * KH + b) * KW + c];
            for (idx ot = rt.lo; ot < rt.hi; ++ot) {
              const idx it = ot * st + a - pt;
              for (idx oy = ry.lo; oy < ry.hi; ++oy) {
                const idx iy = oy * s + b - p;
                const double* row_in = ic + (it * H + iy) * W + c - p;
                double* row_out = oc + (ot * OH + oy) * OW;
                if (s == 1) {
                  for (idx ox = rx.lo; ox < rx.hi; ++ox) row_out[ox] += wv * row_in[ox];
                } else {
                  for (idx ox = rx.lo; ox < rx.hi; ++ox) row_out[ox] += wv * row_in[ox * s];
                }
              }
            }
          }
        }
      }
    }
  }
}

void conv_backward_input(const ConvGeometry& g, std::span<const double> grad_out,
                         std::span<const double> weight, std::span<double> grad_in) {
  const idx OT = g.out_t(), OH = g.out_h(), OW = g.out_w();
  const idx T = g.t, H = g.h, W = g.w;
  const idx KT = g.kt, KH = g.kh, KW = g.kw;
  const idx st = g.stride_t, s = g.stride, pt = g.pad_t, p = g.pad;
  const idx CI = g.c_in, CO = g.c_out;
  const double* go = grad_out.data();
  const double* wt = weight.data();
  double* gi = grad_in.data();

#pragma omp parallel for schedule(static)
  for (idx ci = 0; ci < CI; ++ci) {
    double* ic = gi + ci * T * H * W;
    for (idx co = 0; co < CO; ++co) {
      const double* oc = go + co * OT * OH * OW;
      for (idx a = 0; a < KT; ++a) {
        const Range rt = valid_range(OT, T, st, a, pt);
        for (idx b = 0; b < KH; ++b) {
          const Range ry = valid_range(OH, H, s, b, p);
          for (idx c = 0; c < KW; ++c) {
            const Range rx = valid_range(OW, W, s, c, p);
            const double wv = wt[(((co * CI + ci) * KT + a) * KH + b) * KW + c];
            for (idx ot = rt.lo; ot < rt.hi; ++ot) {
              const idx it = ot * st + a - pt;
              for (idx oy = ry.lo; oy < ry.hi; ++oy) {
                const idx iy = oy * s + b - p;
                double* row_in = ic + (it * H + iy) * W + c - p;
                const double* row_out = oc + (ot * OH + oy) * OW;
                if (s == 1) {
                  for (idx ox = rx.lo; ox < rx.hi; ++ox) row_in[ox] += wv * row_out[ox];
                } else {
                  for (idx ox = rx.lo; ox < rx.hi; ++ox) row_in[ox * s] += wv * row_out[ox];
                }
              }
            }
          }
        }
      }
    }
  }
}

void conv_backward_weight(const ConvGeometry& g, std::span<const double> grad_out,
                          std::span<const double> in, std::span<double> grad_weight,
                          std::span<double> grad_bias) {
  const idx OT = g.out_t(), OH = g.out_h(), OW = g.out_w();
  const idx T = g.t, H = g.h, W = g.w;
  const idx KT = g.kt, KH = g.kh, KW = g.kw;
  const idx st = g.stride_t, s = g.stride, pt = g.pad_t, p = g.pad;
  const idx CI = g.c_in, CO = g.c_out;
  const double* go = grad_out.data();
  const double* src = in.data();
  const bool want_w = !grad_weight.empty();
  const bool want_b = !grad_bias.empty();

#pragma omp parallel for schedule(static)
  for (idx co = 0; co < CO; ++co) {
    const double* oc = go + co * OT * OH * OW;
    if (want_b) {
      double acc = 0.0;
      for (idx i = 0; i < OT * OH * OW; ++i) acc += oc[i];
      grad_bias[co] += acc;
    }
    if (!want_w) continue;
    for (idx ci = 0; ci < CI; ++ci) {
      const double* ic = src + ci * T * H * W;
      for (idx a = 0; a < KT; ++a) {
        const Range rt = valid_range(OT, T, st, a, pt);
        for (idx b = 0; b < KH; ++b) {
          const Range ry = valid_range(OH, H, s, b, p);
          for (idx c = 0; c < KW; ++c) {
            const Range rx = valid_range(OW, W, s, c, p);
            double acc = 0.0;
            for (idx ot = rt.lo; ot < rt.hi; ++ot) {
              const idx it = ot * st + a - pt;
              for (idx oy = ry.lo; oy < ry.hi; ++oy) {
                const idx iy = oy * s + b - p;
                const double* row_in = ic + (it * H + iy) * W + c - p;
                const double* row_out = oc + (ot * OH + oy) * OW;
                for (idx ox = rx.lo; ox < rx.hi; ++ox) acc += row_out[ox] * row_in[ox * s];
              }
            }
            grad_weight[(((co * CI + ci) * KT + a) * KH + b) * KW + c] += acc;
          }
        }
      }
    }
  }
}

std::vector<std::array<double, 2>> square_grid(std::size_t k) {
  std::vector<std::array<double, 2>> grid;
  const double r = static_cast<double>(k / 2);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      grid.push_back({static_cast<double>(i) - r, static_cast<double>(j) - r});
    }
  }
  return grid;
}

void deform_forward(const DeformGeometry& g, std::span<const double> frames,
                    std::span<const double> weights, std::span<const double> offsets,
                    std::span<double> out) {
  const idx N = g.n_frames, C = g.channels, H = g.h, W = g.w, F = g.taps();
  const idx plane = H * W;

#pragma omp parallel for schedule(static)
  for (idx y = 0; y < H; ++y) {
    for (idx x = 0; x < W; ++x) {
      const idx pix = y * W + x;
      for (idx c = 0; c < C; ++c) out[c * plane + pix] = 0.0;
      for (idx i = 0; i < N; ++i) {
        for (idx k = 0; k < F; ++k) {
          const double wv = weights[(i * F + k) * plane + pix];
          const double sy = static_cast<double>(y) + g.grid[k][0] +
                            offsets[((i * F + k) * 2 + 0) * plane + pix];
          const double sx = static_cast<double>(x) + g.grid[k][1] +
                            offsets[((i * F + k) * 2 + 1) * plane + pix];
          const BilinearTap tap = bilinear_tap(g.h, g.w, sy, sx);
          for (idx c = 0; c < C; ++c) {
            out[c * plane + pix] += wv * bilinear_read(frames.data() + (i * C + c) * plane, tap);
          }
        }
      }
    }
  }
}

void deform_backward(const DeformGeometry& g, std::span<const double> frames,
                     std::span<const double> weights, std::span<const double> offsets,
                     std::span<const double> grad_out, std::span<double> grad_frames,
                     std::span<double> grad_weights, std::span<double> grad_offsets) {
  const idx N = g.n_frames, C = g.channels, H = g.h, W = g.w, F = g.taps();
  const idx plane = H * W;
  const bool want_w = !grad_weights.empty();
  const bool want_o = !grad_offsets.empty();

  if (want_w || want_o) {
#pragma omp parallel for schedule(static)
    for (idx y = 0; y < H; ++y) {
      for (idx x = 0; x < W; ++x) {
        const idx pix = y * W + x;
        for (idx i = 0; i < N; ++i) {
          for (idx k = 0; k < F; ++k) {
            const idx wi = (i * F + k) * plane + pix;
            const idx oy = ((i * F + k) * 2 + 0) * plane + pix;
            const idx ox = ((i * F + k) * 2 + 1) * plane + pix;
            const double wv = weights[wi];
            const double sy = static_cast<double>(y) + g.grid[k][0] + offsets[oy];
            const double sx = static_cast<double>(x) + g.grid[k][1] + offsets[ox];
            const BilinearTap tap = bilinear_tap(g.h, g.w, sy, sx);
            double gw = 0.0, gy = 0.0, gx = 0.0;
            for (idx c = 0; c < C; ++c) {
              const double* fp = frames.data() + (i * C + c) * plane;
              const double go = grad_out[c * plane + pix];
              gw += go * bilinear_read(fp, tap);
              const auto d = bilinear_read_grad(fp, tap);
              gy += go * d[0];
              gx += go * d[1];
            }
            if (want_w) grad_weights[wi] += gw;
            if (want_o) {
              grad_offsets[oy] += wv * gy;
              grad_offsets[ox] += wv * gx;
            }
          }
        }
      }
    }
  }

  if (!grad_frames.empty()) {
    // Scatter into source pixels; parallel over (frame, channel) planes so
    // each plane has a single writer.
#pragma omp parallel for schedule(static)
    for (idx ic = 0; ic < N * C; ++ic) {
      const idx i = ic / C, c = ic % C;
      double* gp = grad_frames.data() + ic * plane;
      for (idx y = 0; y < H; ++y) {
        for (idx x = 0; x < W; ++x) {
          const idx pix = y * W + x;
          const double go = grad_out[c * plane + pix];
          for (idx k = 0; k < F; ++k) {
            const double wv = weights[(i * F + k) * plane + pix];
            const double sy = static_cast<double>(y) + g.grid[k][0] +
                              offsets[((i * F + k) * 2 + 0) * plane + pix];
            const double sx = static_cast<double>(x) + g.grid[k][1] +
                              offsets[((i * F + k) * 2 + 1) * plane + pix];
            const BilinearTap tap = bilinear_tap(g.h, g.w, sy, sx);
            const double s = wv * go;
            gp[tap.i00] += s * tap.w00;
            gp[tap.i01] += s * tap.w01;
            gp[tap.i10] += s * tap.w10;
            gp[tap.i11] += s * tap.w11;
          }
        }
      }
    }
  }
}

namespace {

struct Lerp {
  std::size_t i0, i1;
  double l;  // weight of i1
};

Lerp upsample_coord(std::size_t o, std::size_t in_extent, std::size_t factor) {
  double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
  if (src < 0.0) src = 0.0;
  auto i0 = static_cast<std::size_t>(std::floor(src));
  if (i0 > in_extent - 1) i0 = in_extent - 1;
  const std::size_t i1 = std::min(i0 + 1, in_extent - 1);
  return {i0, i1, src - static_cast<double>(i0)};
}

}  // namespace

void upsample_forward(std::size_t c, std::size_t h, std::size_t w, std::size_t factor,
                      std::span<const double> in, std::span<double> out) {
  const std::size_t oh = h * factor, ow = w * factor;
  std::vector<Lerp> ys(oh), xs(ow);
  for (std::size_t o = 0; o < oh; ++o) ys[o] = upsample_coord(o, h, factor);
  for (std::size_t o = 0; o < ow; ++o) xs[o] = upsample_coord(o, w, factor);
  const idx C = static_cast<idx>(c);
#pragma omp parallel for schedule(static)
  for (idx ch = 0; ch < C; ++ch) {
    const double* ip = in.data() + ch * h * w;
    double* op = out.data() + ch * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const Lerp ly = ys[oy];
      const double* r0 = ip + ly.i0 * w;
      const double* r1 = ip + ly.i1 * w;
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const Lerp lx = xs[ox];
        const double top = (1.0 - lx.l) * r0[lx.i0] + lx.l * r0[lx.i1];
        const double bot = (1.0 - lx.l) * r1[lx.i0] + lx.l * r1[lx.i1];
        op[oy * ow + ox] = (1.0 - ly.l) * top + ly.l * bot;
      }
    }
  }
}

void upsample_backward(std::size_t c, std::size_t h, std::size_t w, std::size_t factor,
                       std::span<const double> grad_out, std::span<double> grad_in) {
  const std::size_t oh = h * factor, ow = w * factor;
  std::vector<Lerp> ys(oh), xs(ow);
  for (std::size_t o = 0; o < oh; ++o) ys[o] = upsample_coord(o, h, factor);
  for (std::size_t o = 0; o < ow; ++o) xs[o] = upsample_coord(o, w, factor);
  const idx C = static_cast<idx>(c);
#pragma omp parallel for schedule(static)
  for (idx ch = 0; ch < C; ++ch) {
    const double* gp = grad_out.data() + ch * oh * ow;
    double* ip = grad_in.data() + ch * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const Lerp ly = ys[oy];
      double* r0 = ip + ly.i0 * w;
      double* r1 = ip + ly.i1 * w;
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const Lerp lx = xs[ox];
        const double g = gp[oy * ow + ox];
        const double top = (1.0 - ly.l) * g;
        const double bot = ly.l * g;
        r0[lx.i0] += (1.0 - lx.l) * top;
        r0[lx.i1] += lx.l * top;
        r1[lx.i0] += (1.0 - lx.l) * bot;
        r1[lx.i1] += lx.l * bot;
      }
    }
  }
}

}  // namespace maevi::kernels
