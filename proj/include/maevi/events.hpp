#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "maevi/image.hpp"
#include "maevi/tensor.hpp"

namespace maevi {

struct Event {
  std::int64_t t = 0;  // microseconds
  int x = 0;
  int y = 0;
  int p = 1;  // polarity, -1 or +1

  friend bool operator==(const Event&, const Event&) = default;
};

/// Events of one inter-frame interval [t_start, t_end], sorted by time.
struct EventStream {
  std::vector<Event> events;
  std::int64_t t_start = 0;
  std::int64_t t_end = 1;
  int width = 0;
  int height = 0;

  friend bool operator==(const EventStream&, const EventStream&) = default;
};

/// Throws IoError describing the first violated stream invariant.
void validate(const EventStream& stream);

// Text format: header `W H t_start t_end`, then one `t,x,y,p` per line.
EventStream read_events(const std::filesystem::path& path);
void write_events(const std::filesystem::path& path, const EventStream& stream);
EventStream parse_events(const std::string& text, const std::string& origin = "<events>");
std::string format_events(const EventStream& stream);

/// Five-frame window around the frame to interpolate.
/// frames = I_-2, I_-1, I_1, I_2; intervals[k] spans frame k to frame k+1 of
/// the full sequence I_-2, I_-1, I_0, I_1, I_2.
struct SequenceSample {
  std::string name;
  std::array<Tensor, 4> frames;
  std::optional<Tensor> ground_truth;
  std::array<EventStream, 4> intervals;
  std::array<std::int64_t, 5> timestamps{};

  std::size_t height() const { return frames[0].dim(1); }
  std::size_t width() const { return frames[0].dim(2); }
};

/// Frame file stem for sequence offset -2..2, e.g. "frame_-1".
std::string frame_stem(int offset);

/// Directory layout: frame_{-2,-1,0,1,2}.ppm (frame_0 optional),
/// events_{0,1,2,3}.txt, and optionally timestamps.txt holding the five
/// frame times in microseconds.
SequenceSample load_sample(const std::filesystem::path& dir);
void save_sample(const std::filesystem::path& dir, const SequenceSample& sample);
/// Sample subdirectories of a dataset root, sorted by name.
std::vector<std::filesystem::path> list_samples(const std::filesystem::path& root);
std::vector<SequenceSample> load_dataset(const std::filesystem::path& root);

}  // namespace maevi
