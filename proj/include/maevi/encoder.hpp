#pragma once

#include <array>
#include <random>
#include <string>
#include <vector>

#include "maevi/tensor.hpp"

namespace maevi {

struct NamedParameter {
  std::string name;
  Tensor value;
};
using ParameterList = std::vector<NamedParameter>;

/// Uniform init in +-sqrt(1 / fan_in), marked as requiring gradients.
Tensor init_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng);
/// Zero init, marked as requiring gradients.
Tensor init_zeros(Shape shape);

// absPooling: each window yields the original signed entry of largest
// magnitude; ties go to the first entry in row-major window order.

/// Pools [C, T, H, W] over time with the given window; T % window == 0.
Tensor abs_pool_temporal(const Tensor& x, std::size_t window = 2);
/// Pools [C, T, H, W] over window x window spatial blocks.
Tensor abs_pool_spatial(const Tensor& x, std::size_t window = 2);

struct MhsaParams {
  Tensor w_embed, b_embed;  // [D], [D]: scalar token -> embedding
  Tensor w_q, b_q;          // [D, D], [D]
  Tensor w_k, b_k;
  Tensor w_v, b_v;
  Tensor w_out, b_out;      // [D], [1]: embedding -> scalar
  std::size_t n_heads = 1;

  std::size_t embed_dim() const { return w_embed.dim(0); }
  void collect(ParameterList& out, const std::string& prefix) const;
  /// Output projection starts at zero, so the block starts as identity.
  static MhsaParams create(std::size_t embed_dim, std::size_t n_heads, std::mt19937_64& rng);
};

/// Per-pixel temporal self-attention over [4, T, H, W]: at each pixel the
/// 4*T entries form the token sequence; the attended, re-projected value is
/// added back to each token.
Tensor mhsa(const Tensor& voxels, const MhsaParams& p);

/// Attention weights [n_heads, L, L] at one pixel (rows sum to 1).
Tensor mhsa_attention(const Tensor& voxels, const MhsaParams& p, std::size_t y, std::size_t x);

/// 3x3x3 conv followed by a residual block of two 3x3x3 convs with a
/// leaky ReLU between them.
struct SmoothNet {
  Tensor w_in, b_in;
  Tensor w_a, b_a;
  Tensor w_b, b_b;

  std::size_t out_channels() const { return w_in.dim(0); }
  void collect(ParameterList& out, const std::string& prefix) const;
  static SmoothNet create(std::size_t c_in, std::size_t c_out, std::mt19937_64& rng);
};

Tensor smoothnet(const Tensor& x, const SmoothNet& net);

struct EncoderConfig {
  std::size_t n_heads = 2;
  std::size_t embed_dim = 8;
  std::array<std::size_t, 3> widths{8, 16, 32};  // feature channels at scales 1, 1/2, 1/4
  std::size_t n_time_bins = 8;

  /// Time bins left at each stage: N/2, N/4, N/4.
  std::array<std::size_t, 3> stage_bins() const;
  /// SmoothNet output channels per stage (widths / stage_bins).
  std::array<std::size_t, 3> stage_channels() const;
  void validate() const;
};

/// Feature maps at scales 1, 1/2, 1/4 with `widths` channels.
struct FeatureMaps {
  std::array<Tensor, 3> maps;
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& cfg, std::mt19937_64& rng);

  /// voxels [4, N_TB, H, W] with H, W divisible by 4.
  FeatureMaps encode(const Tensor& voxels) const;

  const EncoderConfig& config() const { return cfg_; }
  const MhsaParams& attention() const { return attn_; }
  const std::array<SmoothNet, 3>& stages() const { return stages_; }
  void collect(ParameterList& out, const std::string& prefix) const;

 private:
  EncoderConfig cfg_;
  MhsaParams attn_;
  std::array<SmoothNet, 3> stages_;
};

}  // namespace maevi
