#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "maevi/config.hpp"
#include "maevi/tensor.hpp"

namespace maevi {

/// Named-tensor container. File layout (little-endian):
///   "MAEVICKP", u32 version, i64 step, i64 epoch,
///   u32 config length, config text,
///   u32 tensor count, then per tensor: u32 name length, name,
///   u32 rank, u64 dims..., f64 values.
struct Checkpoint {
  KeyValueConfig config;
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::int64_t step = 0;
  std::int64_t epoch = 0;

  /// Throws IoError when `name` is absent.
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace maevi
