#include "maevi/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "maevi/kernels.hpp"

namespace maevi {

namespace {

void accumulate(const Tensor& t, std::span<const double> g) {
  if (t.requires_grad()) t.impl_ptr()->accumulate_grad(g);
}

bool is_scalar(const Tensor& t) { return t.shape().empty(); }

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& t, std::size_t rank, const char* what) {
  if (t.ndim() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got " + shape_str(t.shape()));
  }
}

template <typename Fwd, typename Deriv>
Tensor unary(const char* op, const Tensor& a, Fwd f, Deriv dydx) {
  std::vector<double> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  return detail::make_result(op, a.shape(), std::move(out), {a},
                             [a, dydx](const TensorImpl& o) {
                               std::vector<double> g(o.data.size());
                               auto x = a.data();
                               for (std::size_t i = 0; i < g.size(); ++i)
                                 g[i] = o.grad[i] * dydx(x[i], o.data[i]);
                               accumulate(a, g);
                             });
}

enum class BinOp { Add, Sub, Mul };

Tensor binary(const char* op, BinOp kind, const Tensor& a, const Tensor& b) {
  const bool sa = is_scalar(a) && !is_scalar(b);
  const bool sb = is_scalar(b) && !is_scalar(a);
  if (!sa && !sb) require_same(op, a, b);
  const Shape shape = sa ? b.shape() : a.shape();
  const std::size_t n = numel_of(shape);
  std::vector<double> out(n);
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = da[sa ? 0 : i];
    const double y = db[sb ? 0 : i];
    out[i] = kind == BinOp::Add ? x + y : kind == BinOp::Sub ? x - y : x * y;
  }
  return detail::make_result(op, shape, std::move(out), {a, b},
                             [a, b, kind, sa, sb](const TensorImpl& o) {
                               const std::size_t n = o.grad.size();
                               auto da = a.data();
                               auto db = b.data();
                               if (a.requires_grad()) {
                                 std::vector<double> g(sa ? 1 : n, 0.0);
                                 for (std::size_t i = 0; i < n; ++i) {
                                   const double d =
                                       kind == BinOp::Mul ? db[sb ? 0 : i] : 1.0;
                                   g[sa ? 0 : i] += o.grad[i] * d;
                                 }
                                 accumulate(a, g);
                               }
                               if (b.requires_grad()) {
                                 std::vector<double> g(sb ? 1 : n, 0.0);
                                 for (std::size_t i = 0; i < n; ++i) {
                                   const double d = kind == BinOp::Mul   ? da[sa ? 0 : i]
                                                    : kind == BinOp::Sub ? -1.0
                                                                         : 1.0;
                                   g[sb ? 0 : i] += o.grad[i] * d;
                                 }
                                 accumulate(b, g);
                               }
                             });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", BinOp::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", BinOp::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", BinOp::Mul, a, b); }

Tensor scale(const Tensor& a, double s) {
  return unary(
      "scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(
      "add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary(
      "leaky_relu", a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary(
      "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  if (axis >= a.ndim()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(a.shape()));
  }
  const auto& s = a.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  std::vector<double> out(a.numel());
  auto x = a.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < inner; ++j) {
      const std::size_t base = o * n * inner + j;
      double m = x[base];
      for (std::size_t k = 1; k < n; ++k) m = std::max(m, x[base + k * inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double e = std::exp(x[base + k * inner] - m);
        out[base + k * inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < n; ++k) out[base + k * inner] /= z;
    }
  }
  return detail::make_result("softmax", s, std::move(out), {a},
                             [a, outer, inner, n](const TensorImpl& o) {
                               std::vector<double> g(o.data.size());
                               for (std::size_t oo = 0; oo < outer; ++oo) {
                                 for (std::size_t j = 0; j < inner; ++j) {
                                   const std::size_t base = oo * n * inner + j;
                                   double dot = 0.0;
                                   for (std::size_t k = 0; k < n; ++k)
                                     dot += o.data[base + k * inner] * o.grad[base + k * inner];
                                   for (std::size_t k = 0; k < n; ++k) {
                                     const std::size_t i = base + k * inner;
                                     g[i] = o.data[i] * (o.grad[i] - dot);
                                   }
                                 }
                               }
                               accumulate(a, g);
                             });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return detail::make_result("sum", {}, {acc}, {a}, [a](const TensorImpl& o) {
    std::vector<double> g(a.numel(), o.grad[0]);
    accumulate(a, g);
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  const double inv = 1.0 / static_cast<double>(a.numel());
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return detail::make_result("mean", {}, {acc * inv}, {a}, [a, inv](const TensorImpl& o) {
    std::vector<double> g(a.numel(), o.grad[0] * inv);
    accumulate(a, g);
  });
}

Tensor l1_mean(const Tensor& a, const Tensor& b) {
  require_same("l1_mean", a, b);
  if (a.numel() == 0) throw ShapeError("l1_mean: empty tensor");
  const double inv = 1.0 / static_cast<double>(a.numel());
  double acc = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) acc += std::abs(da[i] - db[i]);
  return detail::make_result(
      "l1_mean", {}, {acc * inv}, {a, b}, [a, b, inv](const TensorImpl& o) {
        const std::size_t n = a.numel();
        std::vector<double> g(n);
        auto da = a.data();
        auto db = b.data();
        for (std::size_t i = 0; i < n; ++i) {
          const double d = da[i] - db[i];
          g[i] = d > 0.0 ? o.grad[0] * inv : d < 0.0 ? -o.grad[0] * inv : 0.0;
        }
        accumulate(a, g);
        if (b.requires_grad()) {
          for (auto& v : g) v = -v;
          accumulate(b, g);
        }
      });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel_of(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return detail::make_result("reshape", std::move(shape), std::move(out), {a},
                             [a](const TensorImpl& o) { accumulate(a, o.grad); });
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.ndim() == 0 || Shape(p.shape().begin() + 1, p.shape().end()) != tail) {
      throw ShapeError("concat: incompatible part " + shape_str(p.shape()) + " vs " +
                       shape_str(parts[0].shape()));
    }
    rows += p.dim(0);
  }
  Shape shape{rows};
  shape.insert(shape.end(), tail.begin(), tail.end());
  std::vector<double> out;
  out.reserve(numel_of(shape));
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return detail::make_result("concat", shape, std::move(out), parts,
                             [parts](const TensorImpl& o) {
                               std::size_t off = 0;
                               for (const auto& p : parts) {
                                 accumulate(p, std::span<const double>(o.grad).subspan(
                                                   off, p.numel()));
                                 off += p.numel();
                               }
                             });
}

Tensor slice(const Tensor& a, std::size_t begin, std::size_t end) {
  if (a.ndim() == 0 || begin > end || end > a.dim(0)) {
    throw ShapeError("slice: rows [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for " + shape_str(a.shape()));
  }
  Shape shape = a.shape();
  const std::size_t row = a.numel() / a.dim(0);
  shape[0] = end - begin;
  std::vector<double> out(a.data().begin() + begin * row, a.data().begin() + end * row);
  return detail::make_result("slice", shape, std::move(out), {a},
                             [a, begin, row](const TensorImpl& o) {
                               std::vector<double> g(a.numel(), 0.0);
                               std::copy(o.grad.begin(), o.grad.end(), g.begin() + begin * row);
                               accumulate(a, g);
                             });
}

Tensor mul_plane(const Tensor& a, const Tensor& plane) {
  if (a.ndim() != plane.ndim() + 1 ||
      !std::equal(plane.shape().begin(), plane.shape().end(), a.shape().begin() + 1)) {
    throw ShapeError("mul_plane: plane " + shape_str(plane.shape()) + " does not match " +
                     shape_str(a.shape()));
  }
  const std::size_t n = plane.numel();
  const std::size_t lead = a.dim(0);
  std::vector<double> out(a.numel());
  auto x = a.data();
  auto p = plane.data();
  for (std::size_t c = 0; c < lead; ++c)
    for (std::size_t i = 0; i < n; ++i) out[c * n + i] = x[c * n + i] * p[i];
  return detail::make_result(
      "mul_plane", a.shape(), std::move(out), {a, plane},
      [a, plane, n, lead](const TensorImpl& o) {
        auto x = a.data();
        auto p = plane.data();
        if (a.requires_grad()) {
          std::vector<double> g(a.numel());
          for (std::size_t c = 0; c < lead; ++c)
            for (std::size_t i = 0; i < n; ++i) g[c * n + i] = o.grad[c * n + i] * p[i];
          accumulate(a, g);
        }
        if (plane.requires_grad()) {
          std::vector<double> g(n, 0.0);
          for (std::size_t c = 0; c < lead; ++c)
            for (std::size_t i = 0; i < n; ++i) g[i] += o.grad[c * n + i] * x[c * n + i];
          accumulate(plane, g);
        }
      });
}

namespace {

Tensor conv_impl(const char* op, const kernels::ConvGeometry& geo, const Shape& out_shape,
                 const Tensor& input, const Tensor& weight, const Tensor& bias) {
  std::vector<double> out(geo.out_size());
  const std::span<const double> b =
      bias.defined() ? bias.data() : std::span<const double>{};
  kernels::conv_forward(geo, input.data(), weight.data(), b, out);
  std::vector<Tensor> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  return detail::make_result(
      op, out_shape, std::move(out), std::move(inputs),
      [geo, input, weight, bias](const TensorImpl& o) {
        if (input.requires_grad()) {
          std::vector<double> g(input.numel(), 0.0);
          kernels::conv_backward_input(geo, o.grad, weight.data(), g);
          accumulate(input, g);
        }
        const bool want_w = weight.requires_grad();
        const bool want_b = bias.defined() && bias.requires_grad();
        if (want_w || want_b) {
          std::vector<double> gw(want_w ? weight.numel() : 0, 0.0);
          std::vector<double> gb(want_b ? bias.numel() : 0, 0.0);
          kernels::conv_backward_weight(geo, o.grad, input.data(), gw, gb);
          if (want_w) accumulate(weight, gw);
          if (want_b) accumulate(bias, gb);
        }
      });
}

void check_bias(const char* op, const Tensor& bias, std::size_t c_out) {
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != c_out)) {
    throw ShapeError(std::string(op) + ": bias " + shape_str(bias.shape()) + " must be [" +
                     std::to_string(c_out) + "]");
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::optional<std::size_t> padding) {
  require_rank("conv2d", input, 3, "input");
  require_rank("conv2d", weight, 4, "weight");
  const std::size_t k = weight.dim(2);
  if (weight.dim(3) != k) throw ShapeError("conv2d: kernel must be square, got " +
                                           shape_str(weight.shape()));
  if (k % 2 == 0) throw ShapeError("conv2d: kernel size must be odd, got " + std::to_string(k));
  if (weight.dim(1) != input.dim(0)) {
    throw ShapeError("conv2d: weight " + shape_str(weight.shape()) + " expects " +
                     std::to_string(weight.dim(1)) + " input channels, input is " +
                     shape_str(input.shape()));
  }
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  check_bias("conv2d", bias, weight.dim(0));
  kernels::ConvGeometry g;
  g.c_in = input.dim(0);
  g.h = input.dim(1);
  g.w = input.dim(2);
  g.c_out = weight.dim(0);
  g.kh = g.kw = k;
  g.stride = stride;
  g.pad = padding.value_or((k - 1) / 2);
  if (g.h + 2 * g.pad < k || g.w + 2 * g.pad < k) {
    throw ShapeError("conv2d: input " + shape_str(input.shape()) + " smaller than kernel");
  }
  return conv_impl("conv2d", g, {g.c_out, g.out_h(), g.out_w()}, input, weight, bias);
}

Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::optional<std::size_t> padding) {
  require_rank("conv3d", input, 4, "input");
  require_rank("conv3d", weight, 5, "weight");
  const std::size_t kt = weight.dim(2), k = weight.dim(3);
  if (weight.dim(4) != k) throw ShapeError("conv3d: spatial kernel must be square, got " +
                                           shape_str(weight.shape()));
  if (k % 2 == 0 || kt % 2 == 0) {
    throw ShapeError("conv3d: kernel sizes must be odd, got " + shape_str(weight.shape()));
  }
  if (weight.dim(1) != input.dim(0)) {
    throw ShapeError("conv3d: weight " + shape_str(weight.shape()) + " expects " +
                     std::to_string(weight.dim(1)) + " input channels, input is " +
                     shape_str(input.shape()));
  }
  if (stride == 0) throw ShapeError("conv3d: stride must be positive");
  check_bias("conv3d", bias, weight.dim(0));
  kernels::ConvGeometry g;
  g.c_in = input.dim(0);
  g.t = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.c_out = weight.dim(0);
  g.kt = kt;
  g.kh = g.kw = k;
  g.stride_t = g.stride = stride;
  g.pad_t = padding.value_or((kt - 1) / 2);
  g.pad = padding.value_or((k - 1) / 2);
  if (g.t + 2 * g.pad_t < kt || g.h + 2 * g.pad < k || g.w + 2 * g.pad < k) {
    throw ShapeError("conv3d: input " + shape_str(input.shape()) + " smaller than kernel");
  }
  return conv_impl("conv3d", g, {g.c_out, g.out_t(), g.out_h(), g.out_w()}, input, weight,
                   bias);
}

Tensor bilinear_upsample(const Tensor& a, std::size_t factor) {
  require_rank("bilinear_upsample", a, 3, "input");
  if (factor == 0) throw ShapeError("bilinear_upsample: factor must be positive");
  const std::size_t c = a.dim(0), h = a.dim(1), w = a.dim(2);
  std::vector<double> out(c * h * factor * w * factor);
  kernels::upsample_forward(c, h, w, factor, a.data(), out);
  return detail::make_result("bilinear_upsample", {c, h * factor, w * factor}, std::move(out),
                             {a}, [a, c, h, w, factor](const TensorImpl& o) {
                               std::vector<double> g(a.numel(), 0.0);
                               kernels::upsample_backward(c, h, w, factor, o.grad, g);
                               accumulate(a, g);
                             });
}

Tensor avg_pool2(const Tensor& a) {
  require_rank("avg_pool2", a, 3, "input");
  const std::size_t c = a.dim(0), h = a.dim(1), w = a.dim(2);
  if (h % 2 || w % 2) throw ShapeError("avg_pool2: odd extent in " + shape_str(a.shape()));
  const std::size_t oh = h / 2, ow = w / 2;
  std::vector<double> out(c * oh * ow);
  auto x = a.data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const double* p = x.data() + (ch * h + 2 * y) * w + 2 * xx;
        out[(ch * oh + y) * ow + xx] = 0.25 * (p[0] + p[1] + p[w] + p[w + 1]);
      }
  return detail::make_result("avg_pool2", {c, oh, ow}, std::move(out), {a},
                             [a, c, h, w, oh, ow](const TensorImpl& o) {
                               std::vector<double> g(a.numel(), 0.0);
                               for (std::size_t ch = 0; ch < c; ++ch)
                                 for (std::size_t y = 0; y < oh; ++y)
                                   for (std::size_t xx = 0; xx < ow; ++xx) {
                                     const double v = 0.25 * o.grad[(ch * oh + y) * ow + xx];
                                     double* p = g.data() + (ch * h + 2 * y) * w + 2 * xx;
                                     p[0] += v;
                                     p[1] += v;
                                     p[w] += v;
                                     p[w + 1] += v;
                                   }
                               accumulate(a, g);
                             });
}

}  // namespace maevi
