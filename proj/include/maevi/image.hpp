#pragma once

#include <filesystem>
#include <stdexcept>

#include "maevi/tensor.hpp"

namespace maevi {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 8-bit binary netpbm rasters: P6 for [3, H, W], P5 for [1, H, W].
// Pixel values map to [0, 1] as v / 255; writing rounds and clamps.

Tensor read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Tensor& image);

/// Values as they would read back after write_image.
Tensor quantize_8bit(const Tensor& image);

}  // namespace maevi
