#pragma once

#include <string>

#include "maevi/motion_filter.hpp"

namespace maevi {

struct LossConfig {
  double alpha = 0.6;
  void validate() const;
};

/// L_full = mean |pred - gt|.
Tensor loss_full(const Tensor& pred, const Tensor& gt);
/// L_filtered = mean |lf * pred - lf * gt|, lf broadcast over channels.
Tensor loss_filtered(const Tensor& pred, const Tensor& gt, const LossFilter& lf);
/// alpha * L_filtered + (1 - alpha) * L_full.
Tensor motion_aware_loss(const Tensor& pred, const Tensor& gt, const LossFilter& lf,
                         const LossConfig& cfg);

/// 10 log10(peak^2 / MSE); +inf when MSE is 0.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

/// Mean SSIM over the valid 11x11 windows (Gaussian, sigma 1.5) of the
/// channel-mean grayscale images.
double ssim(const Tensor& a, const Tensor& b, double peak = 1.0);

/// PSNR over the pixels where lf > 0.5, all channels.
double masked_psnr(const Tensor& a, const Tensor& b, const LossFilter& lf, double peak = 1.0);

/// "inf" for infinite values, fixed precision otherwise.
std::string format_metric(double v, int precision = 4);

}  // namespace maevi
