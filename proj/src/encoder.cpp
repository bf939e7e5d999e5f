#include "maevi/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "maevi/ops.hpp"

namespace maevi {

Tensor init_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  Tensor t = Tensor::uniform(std::move(shape), -bound, bound, rng);
  t.set_requires_grad(true);
  return t;
}

Tensor init_zeros(Shape shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  t.set_requires_grad(true);
  return t;
}

namespace {

void accumulate(const Tensor& t, std::span<const double> g) {
  if (t.requires_grad()) t.impl_ptr()->accumulate_grad(g);
}

// Shared pooling core: `index` maps (output element, window slot) to the
// input flat index; the winner per output is recorded for the backward pass.
template <typename IndexFn>
Tensor abs_pool_impl(const char* op, const Tensor& x, Shape out_shape, std::size_t window_size,
                     IndexFn index) {
  const std::size_t n = numel_of(out_shape);
  std::vector<double> out(n);
  std::vector<std::size_t> arg(n);
  auto d = x.data();
  for (std::size_t o = 0; o < n; ++o) {
    std::size_t best = index(o, 0);
    for (std::size_t s = 1; s < window_size; ++s) {
      const std::size_t i = index(o, s);
      if (std::abs(d[i]) > std::abs(d[best])) best = i;
    }
    arg[o] = best;
    out[o] = d[best];
  }
  return detail::make_result(op, std::move(out_shape), std::move(out), {x},
                             [x, arg = std::move(arg)](const TensorImpl& o) {
                               std::vector<double> g(x.numel(), 0.0);
                               for (std::size_t k = 0; k < arg.size(); ++k) g[arg[k]] += o.grad[k];
                               accumulate(x, g);
                             });
}

}  // namespace

Tensor abs_pool_temporal(const Tensor& x, std::size_t window) {
  if (x.ndim() != 4) throw ShapeError("abs_pool_temporal: expected [C, T, H, W], got " + shape_str(x.shape()));
  const std::size_t C = x.dim(0), T = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (window == 0 || T % window != 0) {
    throw ShapeError("abs_pool_temporal: window " + std::to_string(window) +
                     " does not divide T = " + std::to_string(T));
  }
  const std::size_t OT = T / window, plane = H * W;
  return abs_pool_impl("abs_pool_temporal", x, {C, OT, H, W}, window,
                       [=](std::size_t o, std::size_t s) {
                         const std::size_t p = o % plane;
                         const std::size_t ot = (o / plane) % OT;
                         const std::size_t c = o / (plane * OT);
                         return (c * T + ot * window + s) * plane + p;
                       });
}

Tensor abs_pool_spatial(const Tensor& x, std::size_t window) {
  if (x.ndim() != 4) throw ShapeError("abs_pool_spatial: expected [C, T, H, W], got " + shape_str(x.shape()));
  const std::size_t C = x.dim(0), T = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (window == 0 || H % window != 0 || W % window != 0) {
    throw ShapeError("abs_pool_spatial: window " + std::to_string(window) + " does not divide " +
                     std::to_string(H) + "x" + std::to_string(W));
  }
  const std::size_t OH = H / window, OW = W / window;
  return abs_pool_impl("abs_pool_spatial", x, {C, T, OH, OW}, window * window,
                       [=](std::size_t o, std::size_t s) {
                         const std::size_t ox = o % OW;
                         const std::size_t oy = (o / OW) % OH;
                         const std::size_t ct = o / (OW * OH);
                         const std::size_t iy = oy * window + s / window;
                         const std::size_t ix = ox * window + s % window;
                         return (ct * H + iy) * W + ix;
                       });
}

void MhsaParams::collect(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + "w_embed", w_embed});
  out.push_back({prefix + "b_embed", b_embed});
  out.push_back({prefix + "w_q", w_q});
  out.push_back({prefix + "b_q", b_q});
  out.push_back({prefix + "w_k", w_k});
  out.push_back({prefix + "b_k", b_k});
  out.push_back({prefix + "w_v", w_v});
  out.push_back({prefix + "b_v", b_v});
  out.push_back({prefix + "w_out", w_out});
  out.push_back({prefix + "b_out", b_out});
}

MhsaParams MhsaParams::create(std::size_t embed_dim, std::size_t n_heads, std::mt19937_64& rng) {
  if (n_heads == 0 || embed_dim % n_heads != 0) {
    throw std::invalid_argument("mhsa: embed_dim " + std::to_string(embed_dim) +
                                " not divisible by n_heads " + std::to_string(n_heads));
  }
  const std::size_t D = embed_dim;
  MhsaParams p;
  p.n_heads = n_heads;
  p.w_embed = init_uniform({D}, 1, rng);
  p.b_embed = init_uniform({D}, 1, rng);
  p.w_q = init_uniform({D, D}, D, rng);
  p.b_q = init_uniform({D}, D, rng);
  p.w_k = init_uniform({D, D}, D, rng);
  p.b_k = init_uniform({D}, D, rng);
  p.w_v = init_uniform({D, D}, D, rng);
  p.b_v = init_uniform({D}, D, rng);
  p.w_out = init_zeros({D});
  p.b_out = init_zeros({1});
  return p;
}

namespace {

// Forward state of attention at one pixel. Matrices are row-major [L, D]
// (tokens x embedding) and [heads, L, L] for attention.
struct MhsaPixel {
  std::size_t L, D, heads, dh;
  double scale;
  std::vector<double> x, E, Q, K, V, A, O, y;

  MhsaPixel(std::size_t tokens, std::size_t dim, std::size_t n_heads)
      : L(tokens), D(dim), heads(n_heads), dh(dim / n_heads),
        scale(1.0 / std::sqrt(static_cast<double>(dim / n_heads))),
        x(L), E(L * D), Q(L * D), K(L * D), V(L * D), A(heads * L * L), O(L * D), y(L) {}

  void forward(const MhsaParams& p) {
    auto we = p.w_embed.data(), be = p.b_embed.data();
    for (std::size_t j = 0; j < L; ++j)
      for (std::size_t d = 0; d < D; ++d) E[j * D + d] = x[j] * we[d] + be[d];
    project(p.w_q.data(), p.b_q.data(), Q);
    project(p.w_k.data(), p.b_k.data(), K);
    project(p.w_v.data(), p.b_v.data(), V);
    std::fill(O.begin(), O.end(), 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
      double* a = A.data() + h * L * L;
      const std::size_t e0 = h * dh;
      for (std::size_t j = 0; j < L; ++j) {
        double m = -1e300;
        for (std::size_t k = 0; k < L; ++k) {
          double s = 0.0;
          for (std::size_t e = e0; e < e0 + dh; ++e) s += Q[j * D + e] * K[k * D + e];
          a[j * L + k] = s * scale;
          m = std::max(m, a[j * L + k]);
        }
        double z = 0.0;
        for (std::size_t k = 0; k < L; ++k) {
          a[j * L + k] = std::exp(a[j * L + k] - m);
          z += a[j * L + k];
        }
        for (std::size_t k = 0; k < L; ++k) a[j * L + k] /= z;
        for (std::size_t k = 0; k < L; ++k) {
          const double w = a[j * L + k];
          for (std::size_t e = e0; e < e0 + dh; ++e) O[j * D + e] += w * V[k * D + e];
        }
      }
    }
    auto wo = p.w_out.data();
    const double bo = p.b_out.data()[0];
    for (std::size_t j = 0; j < L; ++j) {
      double s = bo;
      for (std::size_t e = 0; e < D; ++e) s += O[j * D + e] * wo[e];
      y[j] = s;
    }
  }

  bool is_quiet() const {
    return std::all_of(x.begin(), x.end(), [](double v) { return v == 0.0; });
  }

  void project(std::span<const double> w, std::span<const double> b, std::vector<double>& out) const {
    for (std::size_t j = 0; j < L; ++j)
      for (std::size_t e = 0; e < D; ++e) {
        double s = b[e];
        for (std::size_t d = 0; d < D; ++d) s += E[j * D + d] * w[d * D + e];
        out[j * D + e] = s;
      }
  }
};

// Offsets of each parameter inside a flat gradient buffer.
struct MhsaGradLayout {
  std::size_t we, be, wq, bq, wk, bk, wv, bv, wo, bo, total;
  explicit MhsaGradLayout(std::size_t D) {
    std::size_t o = 0;
    we = o; o += D;
    be = o; o += D;
    wq = o; o += D * D;
    bq = o; o += D;
    wk = o; o += D * D;
    bk = o; o += D;
    wv = o; o += D * D;
    bv = o; o += D;
    wo = o; o += D;
    bo = o; o += 1;
    total = o;
  }
};

// Accumulates parameter gradients into `pg` and writes dL/dx into `dx`.
void mhsa_pixel_backward(const MhsaPixel& s, const MhsaParams& p, std::span<const double> g,
                         std::span<double> dx, std::span<double> pg, const MhsaGradLayout& lay) {
  const std::size_t L = s.L, D = s.D, dh = s.dh;
  auto wo = p.w_out.data();
  std::vector<double> dO(L * D), dQ(L * D, 0.0), dK(L * D, 0.0), dV(L * D, 0.0), dE(L * D, 0.0);
  std::vector<double> dA(L);
  for (std::size_t j = 0; j < L; ++j) {
    pg[lay.bo] += g[j];
    for (std::size_t e = 0; e < D; ++e) {
      pg[lay.wo + e] += g[j] * s.O[j * D + e];
      dO[j * D + e] = g[j] * wo[e];
    }
  }
  for (std::size_t h = 0; h < s.heads; ++h) {
    const double* a = s.A.data() + h * L * L;
    const std::size_t e0 = h * dh;
    for (std::size_t j = 0; j < L; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < L; ++k) {
        double v = 0.0;
        for (std::size_t e = e0; e < e0 + dh; ++e) v += dO[j * D + e] * s.V[k * D + e];
        dA[k] = v;
        dot += a[j * L + k] * v;
        for (std::size_t e = e0; e < e0 + dh; ++e) dV[k * D + e] += a[j * L + k] * dO[j * D + e];
      }
      for (std::size_t k = 0; k < L; ++k) {
        const double dS = a[j * L + k] * (dA[k] - dot) * s.scale;
        if (dS == 0.0) continue;
        for (std::size_t e = e0; e < e0 + dh; ++e) {
          dQ[j * D + e] += dS * s.K[k * D + e];
          dK[k * D + e] += dS * s.Q[j * D + e];
        }
      }
    }
  }
  const auto back_project = [&](const std::vector<double>& dP, std::span<const double> w,
                                std::size_t w_off, std::size_t b_off) {
    for (std::size_t j = 0; j < L; ++j)
      for (std::size_t e = 0; e < D; ++e) {
        const double gpe = dP[j * D + e];
        pg[b_off + e] += gpe;
        for (std::size_t d = 0; d < D; ++d) {
          pg[w_off + d * D + e] += s.E[j * D + d] * gpe;
          dE[j * D + d] += gpe * w[d * D + e];
        }
      }
  };
  back_project(dQ, p.w_q.data(), lay.wq, lay.bq);
  back_project(dK, p.w_k.data(), lay.wk, lay.bk);
  back_project(dV, p.w_v.data(), lay.wv, lay.bv);
  auto we = p.w_embed.data();
  for (std::size_t j = 0; j < L; ++j) {
    double acc = g[j];
    for (std::size_t d = 0; d < D; ++d) {
      pg[lay.we + d] += s.x[j] * dE[j * D + d];
      pg[lay.be + d] += dE[j * D + d];
      acc += dE[j * D + d] * we[d];
    }
    dx[j] = acc;
  }
}

void check_mhsa_input(const Tensor& voxels, const MhsaParams& p) {
  if (voxels.ndim() != 4) throw ShapeError("mhsa: expected [4, T, H, W], got " + shape_str(voxels.shape()));
  if (p.n_heads == 0 || p.embed_dim() % p.n_heads != 0) {
    throw std::invalid_argument("mhsa: embed_dim not divisible by n_heads");
  }
}

}  // namespace

Tensor mhsa(const Tensor& voxels, const MhsaParams& p) {
  check_mhsa_input(voxels, p);
  const std::size_t L = voxels.dim(0) * voxels.dim(1);
  const std::size_t H = voxels.dim(2), W = voxels.dim(3), plane = H * W;
  const std::size_t D = p.embed_dim(), heads = p.n_heads;
  std::vector<double> out(voxels.numel());
  auto in = voxels.data();
  const long rows = static_cast<long>(H);
  // Event-free pixels all share one token sequence; evaluate it once.
  MhsaPixel quiet(L, D, heads);
  quiet.forward(p);

#pragma omp parallel for schedule(static)
  for (long y = 0; y < rows; ++y) {
    MhsaPixel s(L, D, heads);
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t pix = y * W + x;
      for (std::size_t j = 0; j < L; ++j) s.x[j] = in[j * plane + pix];
      const MhsaPixel& r = s.is_quiet() ? quiet : (s.forward(p), s);
      for (std::size_t j = 0; j < L; ++j) out[j * plane + pix] = r.x[j] + r.y[j];
    }
  }

  std::vector<Tensor> inputs{voxels,  p.w_embed, p.b_embed, p.w_q, p.b_q,  p.w_k,
                             p.b_k,   p.w_v,     p.b_v,     p.w_out, p.b_out};
  return detail::make_result(
      "mhsa", voxels.shape(), std::move(out), inputs, [voxels, p, L, H, W, D, heads](const TensorImpl& o) {
        const std::size_t plane = H * W;
        const MhsaGradLayout lay(D);
        std::vector<double> partial(H * lay.total, 0.0);
        std::vector<double> dx(voxels.numel(), 0.0);
        auto in = voxels.data();
        const long rows = static_cast<long>(H);
        MhsaPixel quiet(L, D, heads);
        quiet.forward(p);
        // On event-free pixels the backward map is linear in g with a shared
        // state: dx = M g and the parameter gradient is that of sum(g).
        std::vector<double> quiet_map(L * L), unit(L, 0.0), col(L), scratch(lay.total);
        for (std::size_t j = 0; j < L; ++j) {
          unit[j] = 1.0;
          mhsa_pixel_backward(quiet, p, unit, col, scratch, lay);
          unit[j] = 0.0;
          for (std::size_t i = 0; i < L; ++i) quiet_map[i * L + j] = col[i];
        }
        std::vector<double> quiet_g(H * L, 0.0);
#pragma omp parallel for schedule(static)
        for (long y = 0; y < rows; ++y) {
          MhsaPixel s(L, D, heads);
          std::vector<double> g(L), dxp(L);
          std::span<double> pg(partial.data() + y * lay.total, lay.total);
          for (std::size_t x = 0; x < W; ++x) {
            const std::size_t pix = y * W + x;
            for (std::size_t j = 0; j < L; ++j) {
              s.x[j] = in[j * plane + pix];
              g[j] = o.grad[j * plane + pix];
            }
            if (s.is_quiet()) {
              double* qg = quiet_g.data() + y * L;
              for (std::size_t i = 0; i < L; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < L; ++j) acc += quiet_map[i * L + j] * g[j];
                dxp[i] = acc;
                qg[i] += g[i];
              }
            } else {
              s.forward(p);
              mhsa_pixel_backward(s, p, g, dxp, pg, lay);
            }
            for (std::size_t j = 0; j < L; ++j) dx[j * plane + pix] = dxp[j];
          }
        }
        accumulate(voxels, dx);
        std::vector<double> total(lay.total, 0.0), g_sum(L, 0.0);
        for (std::size_t y = 0; y < H; ++y) {
          for (std::size_t i = 0; i < lay.total; ++i) total[i] += partial[y * lay.total + i];
          for (std::size_t j = 0; j < L; ++j) g_sum[j] += quiet_g[y * L + j];
        }
        mhsa_pixel_backward(quiet, p, g_sum, col, total, lay);
        const std::span<const double> t(total);
        accumulate(p.w_embed, t.subspan(lay.we, D));
        accumulate(p.b_embed, t.subspan(lay.be, D));
        accumulate(p.w_q, t.subspan(lay.wq, D * D));
        accumulate(p.b_q, t.subspan(lay.bq, D));
        accumulate(p.w_k, t.subspan(lay.wk, D * D));
        accumulate(p.b_k, t.subspan(lay.bk, D));
        accumulate(p.w_v, t.subspan(lay.wv, D * D));
        accumulate(p.b_v, t.subspan(lay.bv, D));
        accumulate(p.w_out, t.subspan(lay.wo, D));
        accumulate(p.b_out, t.subspan(lay.bo, 1));
      });
}

Tensor mhsa_attention(const Tensor& voxels, const MhsaParams& p, std::size_t y, std::size_t x) {
  check_mhsa_input(voxels, p);
  const std::size_t L = voxels.dim(0) * voxels.dim(1);
  const std::size_t W = voxels.dim(3), plane = voxels.dim(2) * W;
  MhsaPixel s(L, p.embed_dim(), p.n_heads);
  for (std::size_t j = 0; j < L; ++j) s.x[j] = voxels.data()[j * plane + y * W + x];
  s.forward(p);
  return Tensor({p.n_heads, L, L}, s.A);
}

void SmoothNet::collect(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + "w_in", w_in});
  out.push_back({prefix + "b_in", b_in});
  out.push_back({prefix + "w_a", w_a});
  out.push_back({prefix + "b_a", b_a});
  out.push_back({prefix + "w_b", w_b});
  out.push_back({prefix + "b_b", b_b});
}

SmoothNet SmoothNet::create(std::size_t c_in, std::size_t c_out, std::mt19937_64& rng) {
  SmoothNet n;
  n.w_in = init_uniform({c_out, c_in, 3, 3, 3}, c_in * 27, rng);
  n.b_in = init_uniform({c_out}, c_in * 27, rng);
  n.w_a = init_uniform({c_out, c_out, 3, 3, 3}, c_out * 27, rng);
  n.b_a = init_uniform({c_out}, c_out * 27, rng);
  n.w_b = init_uniform({c_out, c_out, 3, 3, 3}, c_out * 27, rng);
  n.b_b = init_uniform({c_out}, c_out * 27, rng);
  return n;
}

Tensor smoothnet(const Tensor& x, const SmoothNet& net) {
  const Tensor y = conv3d(x, net.w_in, net.b_in);
  const Tensor r = conv3d(leaky_relu(conv3d(y, net.w_a, net.b_a)), net.w_b, net.b_b);
  return add(y, r);
}

std::array<std::size_t, 3> EncoderConfig::stage_bins() const {
  return {n_time_bins / 2, n_time_bins / 4, n_time_bins / 4};
}

std::array<std::size_t, 3> EncoderConfig::stage_channels() const {
  const auto bins = stage_bins();
  return {widths[0] / bins[0], widths[1] / bins[1], widths[2] / bins[2]};
}

void EncoderConfig::validate() const {
  if (n_time_bins == 0 || n_time_bins % 4 != 0) {
    throw std::invalid_argument("encoder: n_time_bins must be a positive multiple of 4, got " +
                                std::to_string(n_time_bins));
  }
  if (n_heads == 0 || embed_dim % n_heads != 0) {
    throw std::invalid_argument("encoder: embed_dim must be divisible by n_heads");
  }
  const auto bins = stage_bins();
  for (std::size_t s = 0; s < 3; ++s) {
    if (widths[s] == 0 || widths[s] % bins[s] != 0) {
      throw std::invalid_argument("encoder: width " + std::to_string(widths[s]) +
                                  " at scale " + std::to_string(s) +
                                  " is not a multiple of its time bins " + std::to_string(bins[s]));
    }
  }
}

Encoder::Encoder(const EncoderConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
  cfg_.validate();
  attn_ = MhsaParams::create(cfg.embed_dim, cfg.n_heads, rng);
  const auto ch = cfg_.stage_channels();
  stages_[0] = SmoothNet::create(4, ch[0], rng);
  stages_[1] = SmoothNet::create(ch[0], ch[1], rng);
  stages_[2] = SmoothNet::create(ch[1], ch[2], rng);
}

FeatureMaps Encoder::encode(const Tensor& voxels) const {
  if (voxels.ndim() != 4 || voxels.dim(0) != 4 || voxels.dim(1) != cfg_.n_time_bins) {
    throw ShapeError("encode: expected voxels [4, " + std::to_string(cfg_.n_time_bins) +
                     ", H, W], got " + shape_str(voxels.shape()));
  }
  if (voxels.dim(2) % 4 != 0 || voxels.dim(3) % 4 != 0) {
    throw ShapeError("encode: H and W must be divisible by 4, got " + shape_str(voxels.shape()));
  }
  const auto fold = [](const Tensor& t) {
    return reshape(t, {t.dim(0) * t.dim(1), t.dim(2), t.dim(3)});
  };
  const Tensor attended = mhsa(voxels, attn_);
  const Tensor s1 = smoothnet(abs_pool_temporal(attended, 2), stages_[0]);
  const Tensor s2 = smoothnet(abs_pool_temporal(abs_pool_spatial(s1, 2), 2), stages_[1]);
  const Tensor s3 = smoothnet(abs_pool_spatial(s2, 2), stages_[2]);
  return {{fold(s1), fold(s2), fold(s3)}};
}

void Encoder::collect(ParameterList& out, const std::string& prefix) const {
  attn_.collect(out, prefix + "attn.");
  for (std::size_t s = 0; s < 3; ++s) stages_[s].collect(out, prefix + "smooth" + std::to_string(s) + ".");
}

}  // namespace maevi
