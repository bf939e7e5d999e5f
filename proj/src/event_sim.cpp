#include "maevi/event_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace maevi {

namespace {

std::vector<double> parse_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("scene: bad number `" + item + "` in " + what);
    }
  }
  return out;
}

std::array<double, 3> parse_color(const std::string& s, const std::string& what) {
  const auto v = parse_list(s, what);
  if (v.size() == 1) return {v[0], v[0], v[0]};
  if (v.size() == 3) return {v[0], v[1], v[2]};
  throw ConfigError("scene: " + what + " needs 1 or 3 components");
}

std::array<double, 2> parse_pair(const std::string& s, const std::string& what) {
  const auto v = parse_list(s, what);
  if (v.size() != 2) throw ConfigError("scene: " + what + " needs two components");
  return {v[0], v[1]};
}

// `rectangle r,g,b x,y vx,vy w,h` or `disk r,g,b x,y vx,vy radius`
SceneShape parse_shape(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> tok;
  for (std::string t; in >> t;) tok.push_back(t);
  SceneShape s;
  if (tok.empty()) throw ConfigError("scene: empty shape line");
  if (tok[0] == "rectangle") {
    if (tok.size() != 5) throw ConfigError("scene: rectangle needs `color x,y vx,vy w,h`");
    s.kind = ShapeKind::Rectangle;
    const auto size = parse_pair(tok[4], "rectangle size");
    s.width = size[0];
    s.height = size[1];
  } else if (tok[0] == "disk") {
    if (tok.size() != 5) throw ConfigError("scene: disk needs `color x,y vx,vy radius`");
    s.kind = ShapeKind::Disk;
    const auto r = parse_list(tok[4], "disk radius");
    if (r.size() != 1) throw ConfigError("scene: disk radius must be a single number");
    s.width = s.height = r[0];
  } else {
    throw ConfigError("scene: unknown shape kind `" + tok[0] + "`");
  }
  s.color = parse_color(tok[1], "shape color");
  const auto pos = parse_pair(tok[2], "shape position");
  const auto vel = parse_pair(tok[3], "shape velocity");
  s.x = pos[0];
  s.y = pos[1];
  s.vx = vel[0];
  s.vy = vel[1];
  return s;
}

bool covers(const SceneShape& s, double cx, double cy, double px, double py) {
  if (s.kind == ShapeKind::Rectangle) {
    return px >= cx - 0.5 * s.width && px < cx + 0.5 * s.width && py >= cy - 0.5 * s.height &&
           py < cy + 0.5 * s.height;
  }
  const double dx = px - cx, dy = py - cy;
  return dx * dx + dy * dy <= s.width * s.width;
}

double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

void SceneSpec::validate() const {
  if (height <= 0 || width <= 0) throw ConfigError("scene: canvas dimensions must be positive");
  if (substeps < 8) throw ConfigError("scene: substeps must be >= 8");
  if (!(contrast_threshold > 0.0 && contrast_threshold < 1.0)) {
    throw ConfigError("scene: contrast_threshold must lie in (0, 1)");
  }
  if (frame_gap_us <= 0) throw ConfigError("scene: frame_gap_us must be positive");
  for (const auto& s : shapes) {
    if (s.width <= 0.0 || s.height <= 0.0) throw ConfigError("scene: shape sizes must be positive");
  }
}

SceneSpec parse_scene(const KeyValueConfig& cfg) {
  cfg.require_known({"height", "width", "background", "shape", "frame_gap_us", "substeps",
                     "contrast_threshold", "position_jitter", "velocity_jitter"},
                    "scene");
  SceneSpec s;
  s.height = static_cast<int>(cfg.get_int("height", s.height));
  s.width = static_cast<int>(cfg.get_int("width", s.width));
  if (cfg.has("background")) s.background = parse_color(cfg.get_string("background", ""), "background");
  for (const auto& line : cfg.get_all("shape")) s.shapes.push_back(parse_shape(line));
  s.frame_gap_us = cfg.get_int("frame_gap_us", s.frame_gap_us);
  s.substeps = static_cast<int>(cfg.get_int("substeps", s.substeps));
  s.contrast_threshold = cfg.get_double("contrast_threshold", s.contrast_threshold);
  s.position_jitter = cfg.get_double("position_jitter", s.position_jitter);
  s.velocity_jitter = cfg.get_double("velocity_jitter", s.velocity_jitter);
  s.validate();
  return s;
}

SceneSpec load_scene(const std::filesystem::path& path) {
  return parse_scene(KeyValueConfig::from_file(path));
}

Tensor render(const SceneSpec& spec, double t_us) {
  const std::size_t H = spec.height, W = spec.width;
  Tensor img({3, H, W});
  auto d = img.data();
  for (std::size_t c = 0; c < 3; ++c) std::fill_n(d.begin() + c * H * W, H * W, spec.background[c]);
  const double gaps = t_us / static_cast<double>(spec.frame_gap_us);
  for (const auto& s : spec.shapes) {
    const double cx = s.x + s.vx * gaps;
    const double cy = s.y + s.vy * gaps;
    const double ex = s.kind == ShapeKind::Rectangle ? 0.5 * s.width : s.width;
    const double ey = s.kind == ShapeKind::Rectangle ? 0.5 * s.height : s.width;
    const long y0 = std::max(0L, static_cast<long>(std::floor(cy - ey)) - 1);
    const long y1 = std::min(static_cast<long>(H) - 1, static_cast<long>(std::ceil(cy + ey)) + 1);
    const long x0 = std::max(0L, static_cast<long>(std::floor(cx - ex)) - 1);
    const long x1 = std::min(static_cast<long>(W) - 1, static_cast<long>(std::ceil(cx + ex)) + 1);
    for (long y = y0; y <= y1; ++y)
      for (long x = x0; x <= x1; ++x) {
        if (!covers(s, cx, cy, static_cast<double>(x), static_cast<double>(y))) continue;
        for (std::size_t c = 0; c < 3; ++c) d[(c * H + y) * W + x] = s.color[c];
      }
  }
  return img;
}

std::vector<double> log_luminance(const Tensor& rgb) {
  const std::size_t plane = rgb.dim(1) * rgb.dim(2);
  auto d = rgb.data();
  std::vector<double> out(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    const double lum = (d[i] + d[plane + i] + d[2 * plane + i]) / 3.0;
    out[i] = std::log(std::max(lum, 1e-3));
  }
  return out;
}

void advance_pixel(double& reference, double l0, double l1, double t0, double t1,
                   double threshold, std::vector<Crossing>& out) {
  if (l1 == l0) return;
  const double span = l1 - l0;
  while (l1 - reference >= threshold) {
    reference += threshold;
    out.push_back({t0 + (reference - l0) / span * (t1 - t0), 1});
  }
  while (reference - l1 >= threshold) {
    reference -= threshold;
    out.push_back({t0 + (reference - l0) / span * (t1 - t0), -1});
  }
}

EventStream simulate_events(const SceneSpec& spec, std::int64_t t_a, std::int64_t t_b) {
  spec.validate();
  if (t_a >= t_b) throw ConfigError("simulate_events: t_a must be < t_b");
  EventStream stream;
  stream.width = spec.width;
  stream.height = spec.height;
  stream.t_start = t_a;
  stream.t_end = t_b;
  const double span = static_cast<double>(t_b - t_a);
  const auto steps = std::max<std::int64_t>(
      1, std::llround(spec.substeps * span / static_cast<double>(spec.frame_gap_us)));
  const std::size_t W = spec.width;
  std::vector<double> prev = log_luminance(render(spec, static_cast<double>(t_a)));
  std::vector<double> reference = prev;
  std::vector<Crossing> crossings;
  double t_prev = static_cast<double>(t_a);
  for (std::int64_t s = 1; s <= steps; ++s) {
    const double t = static_cast<double>(t_a) + span * static_cast<double>(s) / steps;
    const std::vector<double> cur = log_luminance(render(spec, t));
    for (std::size_t i = 0; i < cur.size(); ++i) {
      if (cur[i] == prev[i]) continue;
      crossings.clear();
      advance_pixel(reference[i], prev[i], cur[i], t_prev, t, spec.contrast_threshold, crossings);
      for (const auto& c : crossings) {
        Event e;
        e.t = std::clamp<std::int64_t>(std::llround(c.t), t_a, t_b);
        e.x = static_cast<int>(i % W);
        e.y = static_cast<int>(i / W);
        e.p = c.p;
        stream.events.push_back(e);
      }
    }
    prev = cur;
    t_prev = t;
  }
  std::stable_sort(stream.events.begin(), stream.events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  return stream;
}

SceneSpec jittered(const SceneSpec& spec, std::uint64_t seed, std::size_t index) {
  SceneSpec out = spec;
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + index);
  for (auto& s : out.shapes) {
    s.x += spec.position_jitter * (2.0 * unit_draw(rng) - 1.0);
    s.y += spec.position_jitter * (2.0 * unit_draw(rng) - 1.0);
    s.vx += spec.velocity_jitter * (2.0 * unit_draw(rng) - 1.0);
    s.vy += spec.velocity_jitter * (2.0 * unit_draw(rng) - 1.0);
  }
  return out;
}

SequenceSample make_sample(const SceneSpec& spec, const std::string& name) {
  spec.validate();
  SequenceSample s;
  s.name = name;
  const std::int64_t gap = spec.frame_gap_us;
  for (std::size_t k = 0; k < 5; ++k) s.timestamps[k] = static_cast<std::int64_t>(k) * gap;
  constexpr std::array<std::size_t, 4> input_slots{0, 1, 3, 4};
  for (std::size_t i = 0; i < 4; ++i) {
    s.frames[i] = quantize_8bit(render(spec, static_cast<double>(input_slots[i] * gap)));
  }
  s.ground_truth = quantize_8bit(render(spec, static_cast<double>(2 * gap)));
  const EventStream all = simulate_events(spec, 0, 4 * gap);
  for (std::size_t k = 0; k < 4; ++k) {
    auto& iv = s.intervals[k];
    iv.width = spec.width;
    iv.height = spec.height;
    iv.t_start = s.timestamps[k];
    iv.t_end = s.timestamps[k + 1];
  }
  for (const auto& e : all.events) {
    const auto k = std::min<std::int64_t>(3, e.t / gap);
    s.intervals[k].events.push_back(e);
  }
  return s;
}

void make_dataset(const SceneSpec& spec, std::size_t n_samples, const std::filesystem::path& out_dir,
                  std::uint64_t seed) {
  std::filesystem::create_directories(out_dir);
  for (std::size_t k = 0; k < n_samples; ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "sample_%04zu", k);
    save_sample(out_dir / name, make_sample(jittered(spec, seed, k), name));
  }
}

}  // namespace maevi
