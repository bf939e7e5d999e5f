#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "maevi/config.hpp"
#include "maevi/events.hpp"

namespace maevi {

enum class ShapeKind { Rectangle, Disk };

/// One object moving linearly. Positions are object centres in pixel
/// coordinates (x = column, y = row), velocities in pixels per frame gap.
/// A rectangle covers [x - w/2, x + w/2) x [y - h/2, y + h/2); a disk of
/// radius `width` covers points within that distance of its centre.
struct SceneShape {
  ShapeKind kind = ShapeKind::Rectangle;
  std::array<double, 3> color{1.0, 1.0, 1.0};
  double x = 0.0, y = 0.0;
  double vx = 0.0, vy = 0.0;
  double width = 1.0, height = 1.0;
};

struct SceneSpec {
  int height = 64;
  int width = 64;
  std::array<double, 3> background{0.5, 0.5, 0.5};
  std::vector<SceneShape> shapes;  // later shapes occlude earlier ones
  std::int64_t frame_gap_us = 10000;
  int substeps = 16;  // per frame gap
  double contrast_threshold = 0.15;
  double position_jitter = 0.0;  // per-sample uniform perturbation, px
  double velocity_jitter = 0.0;  // px per gap

  /// Throws ConfigError on violated invariants.
  void validate() const;
};

SceneSpec parse_scene(const KeyValueConfig& cfg);
SceneSpec load_scene(const std::filesystem::path& path);

/// Hard-edged RGB rendering [3, H, W] at time t (microseconds from 0).
Tensor render(const SceneSpec& spec, double t_us);

/// Log-luminance used for event generation: log(max(mean RGB, 1e-3)).
std::vector<double> log_luminance(const Tensor& rgb);

struct Crossing {
  double t;
  int p;
};

/// Advances one pixel's event generator from log-luminance l0 at t0 to l1
/// at t1. `reference` is the level of the last event and is updated; one
/// crossing is appended per multiple of `threshold` passed, timestamped by
/// linear placement within [t0, t1].
void advance_pixel(double& reference, double l0, double l1, double t0, double t1,
                   double threshold, std::vector<Crossing>& out);

/// Events emitted over [t_a, t_b] (microseconds). Every pixel's reference
/// level starts at its log-luminance at t_a.
EventStream simulate_events(const SceneSpec& spec, std::int64_t t_a, std::int64_t t_b);

/// Copy of `spec` with positions and velocities perturbed for sample `index`.
SceneSpec jittered(const SceneSpec& spec, std::uint64_t seed, std::size_t index);

/// Frames at t = 0..4 gaps (I_0 at 2 gaps, quantized to 8 bits like the
/// stored files) and the four interval streams of one continuous simulation.
SequenceSample make_sample(const SceneSpec& spec, const std::string& name);

/// Writes n_samples sample directories (sample_0000, ...) under out_dir.
void make_dataset(const SceneSpec& spec, std::size_t n_samples,
                  const std::filesystem::path& out_dir, std::uint64_t seed);

}  // namespace maevi
