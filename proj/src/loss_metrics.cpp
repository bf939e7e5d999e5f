#include "maevi/loss_metrics.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "maevi/ops.hpp"

namespace maevi {

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " differ");
  }
}

double psnr_from_mse(double mse, double peak) {
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

std::vector<double> grayscale(const Tensor& img) {
  const std::size_t C = img.dim(0), plane = img.dim(1) * img.dim(2);
  auto d = img.data();
  std::vector<double> g(plane, 0.0);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < plane; ++i) g[i] += d[c * plane + i];
  for (double& v : g) v /= static_cast<double>(C);
  return g;
}

}  // namespace

void LossConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("loss: alpha must lie in [0, 1]");
}

Tensor loss_full(const Tensor& pred, const Tensor& gt) {
  require_same(pred, gt, "loss");
  return l1_mean(pred, gt);
}

Tensor loss_filtered(const Tensor& pred, const Tensor& gt, const LossFilter& lf) {
  require_same(pred, gt, "loss");
  if (pred.ndim() != 3 || lf.weights.ndim() != 2 || lf.weights.dim(0) != pred.dim(1) ||
      lf.weights.dim(1) != pred.dim(2)) {
    throw ShapeError("loss: filter " + shape_str(lf.weights.shape()) + " does not match image " +
                     shape_str(pred.shape()));
  }
  return l1_mean(mul_plane(pred, lf.weights), mul_plane(gt, lf.weights));
}

Tensor motion_aware_loss(const Tensor& pred, const Tensor& gt, const LossFilter& lf,
                         const LossConfig& cfg) {
  cfg.validate();
  return add(scale(loss_filtered(pred, gt, lf), cfg.alpha), scale(loss_full(pred, gt), 1.0 - cfg.alpha));
}

double psnr(const Tensor& a, const Tensor& b, double peak) {
  require_same(a, b, "psnr");
  auto x = a.data(), y = b.data();
  double se = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) se += (x[i] - y[i]) * (x[i] - y[i]);
  return psnr_from_mse(se / static_cast<double>(x.size()), peak);
}

double ssim(const Tensor& a, const Tensor& b, double peak) {
  require_same(a, b, "ssim");
  if (a.ndim() != 3) throw ShapeError("ssim: expected [C, H, W]");
  constexpr std::size_t kWin = 11;
  const std::size_t H = a.dim(1), W = a.dim(2);
  if (H < kWin || W < kWin) throw ShapeError("ssim: image smaller than the 11x11 window");
  std::array<double, kWin> g{};
  double gsum = 0.0;
  for (std::size_t i = 0; i < kWin; ++i) {
    const double d = static_cast<double>(i) - 5.0;
    g[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    gsum += g[i];
  }
  for (double& v : g) v /= gsum;
  const auto x = grayscale(a), y = grayscale(b);
  const double c1 = (0.01 * peak) * (0.01 * peak), c2 = (0.03 * peak) * (0.03 * peak);
  double total = 0.0;
  const std::size_t oh = H - kWin + 1, ow = W - kWin + 1;
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (std::size_t i = 0; i < kWin; ++i)
        for (std::size_t j = 0; j < kWin; ++j) {
          const double w = g[i] * g[j];
          const std::size_t k = (oy + i) * W + ox + j;
          mx += w * x[k];
          my += w * y[k];
          sxx += w * x[k] * x[k];
          syy += w * y[k] * y[k];
          sxy += w * x[k] * y[k];
        }
      const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
      total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  return total / static_cast<double>(oh * ow);
}

double masked_psnr(const Tensor& a, const Tensor& b, const LossFilter& lf, double peak) {
  require_same(a, b, "masked_psnr");
  if (a.ndim() != 3 || lf.weights.shape() != Shape{a.dim(1), a.dim(2)}) {
    throw ShapeError("masked_psnr: filter " + shape_str(lf.weights.shape()) +
                     " does not match image " + shape_str(a.shape()));
  }
  const std::size_t C = a.dim(0), plane = a.dim(1) * a.dim(2);
  auto x = a.data(), y = b.data(), m = lf.weights.data();
  double se = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < plane; ++i) {
    if (!(m[i] > 0.5)) continue;
    for (std::size_t c = 0; c < C; ++c) {
      const double d = x[c * plane + i] - y[c * plane + i];
      se += d * d;
    }
    n += C;
  }
  if (n == 0) throw std::invalid_argument("masked_psnr: mask selects no pixels");
  return psnr_from_mse(se / static_cast<double>(n), peak);
}

std::string format_metric(double v, int precision) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

}  // namespace maevi
