#pragma once

// Edge-localization measurement for the motion filter on a simulated scene.

#include <cmath>
#include <limits>
#include <vector>

#include "maevi/event_sim.hpp"
#include "maevi/motion_filter.hpp"
#include "maevi/voxelizer.hpp"

namespace oracle {

struct Localization {
  double near_mean = 0.0;
  double far_mean = 0.0;
  double ratio() const {
    return far_mean > 0.0 ? near_mean / far_mean : std::numeric_limits<double>::infinity();
  }
};

/// Edge pixels of interval i: any pixel whose coverage differs from a
/// 4-neighbour at some substep inside [i, i + 1] frame gaps.
inline std::vector<bool> swept_edges(const maevi::SceneSpec& s, int interval) {
  const int H = s.height, W = s.width;
  std::vector<bool> edge(static_cast<std::size_t>(H * W), false);
  for (int k = 0; k <= s.substeps; ++k) {
    const double t = (interval + static_cast<double>(k) / s.substeps) * static_cast<double>(s.frame_gap_us);
    const maevi::Tensor img = maevi::render(s, t);
    const auto covered = [&](int y, int x) {
      for (int c = 0; c < 3; ++c)
        if (img(c, y, x) != s.background[c]) return true;
      return false;
    };
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const bool self = covered(y, x);
        const int ny[4] = {y - 1, y + 1, y, y};
        const int nx[4] = {x, x, x - 1, x + 1};
        for (int j = 0; j < 4; ++j) {
          if (ny[j] < 0 || nx[j] < 0 || ny[j] >= H || nx[j] >= W) continue;
          if (covered(ny[j], nx[j]) != self) edge[y * W + x] = true;
        }
      }
  }
  return edge;
}

/// Mean filter weight within 2 px of an edge versus at least 10 px from
/// every edge, pooled over the four intervals. The scene must start at t = 0.
inline Localization measure_localization(const maevi::SceneSpec& s, std::size_t time_bins = 8) {
  const maevi::SequenceSample sample = maevi::make_sample(s, "loc");
  const maevi::RegionFilter f = maevi::region_filter(maevi::voxelize_sample(sample, time_bins), {1.0, 2.0});
  const int H = s.height, W = s.width;
  double near = 0.0, far = 0.0;
  std::size_t n_near = 0, n_far = 0;
  for (int i = 0; i < 4; ++i) {
    const auto edge = swept_edges(s, i);
    std::vector<std::pair<int, int>> points;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        if (edge[y * W + x]) points.emplace_back(y, x);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double d2 = std::numeric_limits<double>::infinity();
        for (const auto& [py, px] : points)
          d2 = std::min(d2, static_cast<double>((py - y) * (py - y) + (px - x) * (px - x)));
        const double w = f.weights(static_cast<std::size_t>(i), static_cast<std::size_t>(y),
                                   static_cast<std::size_t>(x));
        if (d2 <= 4.0) {
          near += w;
          ++n_near;
        } else if (d2 >= 100.0) {
          far += w;
          ++n_far;
        }
      }
  }
  return {n_near ? near / static_cast<double>(n_near) : 0.0, n_far ? far / static_cast<double>(n_far) : 0.0};
}

/// A single rectangle moving 4 px per frame gap across a 64x64 frame.
inline maevi::SceneSpec moving_rectangle() {
  maevi::SceneSpec s;
  s.height = s.width = 64;
  s.background = {0.25, 0.3, 0.35};
  maevi::SceneShape r;
  r.kind = maevi::ShapeKind::Rectangle;
  r.color = {0.9, 0.6, 0.2};
  r.x = 22;
  r.y = 32;
  r.vx = 4;
  r.width = 14;
  r.height = 10;
  s.shapes.push_back(r);
  return s;
}

}  // namespace oracle
