#pragma once

// Serial reference implementations of the heavy kernels in kernels.hpp.
// Convolution goes through im2col + a plain matrix product, a different
// route from the direct loops of the parallel kernel. Used by the tests
// and by bench_kernels for timing comparisons.

#include <span>

#include "maevi/kernels.hpp"

namespace maevi::reference {

/// Column matrix of shape [c_in*kt*kh*kw, out_t*out_h*out_w].
std::vector<double> im2col(const kernels::ConvGeometry& g, std::span<const double> in);
void col2im(const kernels::ConvGeometry& g, std::span<const double> cols, std::span<double> in);

void conv_forward(const kernels::ConvGeometry& g, std::span<const double> in,
                  std::span<const double> weight, std::span<const double> bias,
                  std::span<double> out);
void conv_backward_input(const kernels::ConvGeometry& g, std::span<const double> grad_out,
                         std::span<const double> weight, std::span<double> grad_in);
void conv_backward_weight(const kernels::ConvGeometry& g, std::span<const double> grad_out,
                          std::span<const double> in, std::span<double> grad_weight,
                          std::span<double> grad_bias);

void deform_forward(const kernels::DeformGeometry& g, std::span<const double> frames,
                    std::span<const double> weights, std::span<const double> offsets,
                    std::span<double> out);
void deform_backward(const kernels::DeformGeometry& g, std::span<const double> frames,
                     std::span<const double> weights, std::span<const double> offsets,
                     std::span<const double> grad_out, std::span<double> grad_frames,
                     std::span<double> grad_weights, std::span<double> grad_offsets);

}  // namespace maevi::reference
