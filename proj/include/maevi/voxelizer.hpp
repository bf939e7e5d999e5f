#pragma once

#include <array>
#include <filesystem>
#include <utility>

#include "maevi/events.hpp"

namespace maevi {

/// Signed event volume of one sample: data is [4, n_time_bins, H, W].
struct VoxelGrid {
  Tensor data;
  std::size_t n_time_bins = 0;
  std::array<std::pair<std::int64_t, std::int64_t>, 4> intervals{};
};

/// [n_time_bins, H, W] volume. Each event sits at normalized time
/// t* = (t - t_start) / (t_end - t_start) * (n_time_bins - 1) and deposits
/// its polarity into bins floor(t*) and floor(t*) + 1 with linear weights.
Tensor voxelize(const EventStream& stream, std::size_t n_time_bins);

/// Stacks the four interval volumes in temporal order.
VoxelGrid voxelize_sample(const SequenceSample& sample, std::size_t n_time_bins);

/// Flat little-endian dump: int32 rank, int32 dims..., then float64 values.
void write_tensor_dump(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor_dump(const std::filesystem::path& path);

}  // namespace maevi
