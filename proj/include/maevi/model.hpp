#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "maevi/config.hpp"
#include "maevi/encoder.hpp"
#include "maevi/motion_filter.hpp"
#include "maevi/synthesis.hpp"

namespace maevi {

enum class BranchCombine {
  Gated,  // clamp((1 - lf) * standard + filtered)
  Mean,   // clamp((standard + filtered) / 2)
};

enum class BranchLoss {
  Blended,   // loss on the final frame
  Separate,  // L_full on the standard branch, L_filtered on the filtered branch
};

enum class FilterMode { Events, Ones };

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t hidden = 12;
  std::size_t kernel_side = 3;
  double max_offset = 8.0;
  std::vector<double> sigmas{1.0, 2.0};
  BranchCombine combine = BranchCombine::Gated;
  BranchLoss branch_loss = BranchLoss::Blended;
  FilterMode filter = FilterMode::Events;
  bool tie_branches = false;

  void validate() const;
  /// Reads the `model.*` keys; unknown `model.*` keys are rejected.
  static ModelConfig from_config(const KeyValueConfig& cfg);
  KeyValueConfig to_config() const;
  static const std::vector<std::string>& keys();
};

/// Parameter-free inputs of one sample.
struct PreparedSample {
  std::string name;
  Tensor voxels;  // [4, N_TB, H, W]
  Tensor frames;  // [4, 3, H, W]
  Tensor filtered_frames;
  RegionFilter filter;
  LossFilter loss_filter;
  std::optional<Tensor> ground_truth;
};

PreparedSample prepare_sample(const SequenceSample& sample, const ModelConfig& cfg);

struct ModelOutput {
  BranchOutput standard;
  BranchOutput filtered;
  Tensor final_frame;  // [3, H, W] in [0, 1]
};

/// Combines the two fused branch frames into the clamped final frame.
Tensor combine_branches(const Tensor& standard, const Tensor& filtered, const LossFilter& lf,
                        BranchCombine mode);

class Model {
 public:
  Model() = default;
  Model(const ModelConfig& cfg, std::uint64_t seed);

  ModelOutput forward(const PreparedSample& sample) const;

  const ModelConfig& config() const { return cfg_; }
  /// Every trainable tensor once, in a fixed order. Tied branches share
  /// tensors and so contribute them once.
  ParameterList parameters() const;
  std::size_t parameter_count() const;

 private:
  ModelConfig cfg_;
  Encoder encoder_;
  std::array<SynBlock, 3> standard_;
  std::array<SynBlock, 3> filtered_;
};

}  // namespace maevi
