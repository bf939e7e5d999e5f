#include "maevi/events.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace maevi {

namespace {

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::string at_line(const std::string& origin, std::size_t line) {
  return origin + ":" + std::to_string(line) + ": ";
}

}  // namespace

void validate(const EventStream& s) {
  if (s.width <= 0 || s.height <= 0) throw IoError("event stream: non-positive dimensions");
  if (s.t_start >= s.t_end) {
    throw IoError("event stream: empty interval [" + std::to_string(s.t_start) + ", " +
                  std::to_string(s.t_end) + "]");
  }
  std::int64_t prev = s.t_start;
  for (std::size_t i = 0; i < s.events.size(); ++i) {
    const Event& e = s.events[i];
    if (e.x < 0 || e.x >= s.width || e.y < 0 || e.y >= s.height) {
      throw IoError("event " + std::to_string(i) + ": coordinate out of bounds");
    }
    if (e.t < s.t_start || e.t > s.t_end) {
      throw IoError("event " + std::to_string(i) + ": timestamp outside interval");
    }
    if (e.t < prev) throw IoError("event " + std::to_string(i) + ": timestamps not sorted");
    if (e.p != 1 && e.p != -1) throw IoError("event " + std::to_string(i) + ": bad polarity");
    prev = e.t;
  }
}

EventStream parse_events(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  EventStream s;
  bool have_header = false;
  std::int64_t prev = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (!have_header) {
      std::istringstream hs(line);
      std::string extra;
      if (!(hs >> s.width >> s.height >> s.t_start >> s.t_end) || (hs >> extra)) {
        throw IoError(at_line(origin, lineno) + "expected header `W H t_start t_end`");
      }
      if (s.width <= 0 || s.height <= 0) throw IoError(at_line(origin, lineno) + "non-positive dimensions");
      if (s.t_start >= s.t_end) throw IoError(at_line(origin, lineno) + "t_start must be < t_end");
      have_header = true;
      prev = s.t_start;
      continue;
    }
    std::array<std::string_view, 4> fields;
    std::string_view rest(line);
    std::size_t n = 0;
    while (n < 4) {
      const auto comma = rest.find(',');
      fields[n++] = rest.substr(0, comma);
      if (comma == std::string_view::npos) {
        rest = {};
        break;
      }
      rest.remove_prefix(comma + 1);
    }
    Event e;
    if (n != 4 || !rest.empty() || !parse_number(fields[0], e.t) || !parse_number(fields[1], e.x) ||
        !parse_number(fields[2], e.y) || !parse_number(fields[3], e.p)) {
      throw IoError(at_line(origin, lineno) + "malformed event line `" + line + "`");
    }
    if (e.p != 1 && e.p != -1) throw IoError(at_line(origin, lineno) + "polarity must be -1 or 1");
    if (e.x < 0 || e.x >= s.width || e.y < 0 || e.y >= s.height) {
      throw IoError(at_line(origin, lineno) + "coordinate (" + std::to_string(e.x) + ", " +
                    std::to_string(e.y) + ") outside " + std::to_string(s.width) + "x" +
                    std::to_string(s.height));
    }
    if (e.t < s.t_start || e.t > s.t_end) {
      throw IoError(at_line(origin, lineno) + "timestamp " + std::to_string(e.t) +
                    " outside interval");
    }
    if (e.t < prev) throw IoError(at_line(origin, lineno) + "timestamps not sorted");
    prev = e.t;
    s.events.push_back(e);
  }
  if (!have_header) throw IoError(origin + ": missing header line");
  return s;
}

std::string format_events(const EventStream& s) {
  std::string out = std::to_string(s.width) + " " + std::to_string(s.height) + " " +
                    std::to_string(s.t_start) + " " + std::to_string(s.t_end) + "\n";
  out.reserve(out.size() + s.events.size() * 16);
  for (const auto& e : s.events) {
    out += std::to_string(e.t);
    out += ',';
    out += std::to_string(e.x);
    out += ',';
    out += std::to_string(e.y);
    out += ',';
    out += std::to_string(e.p);
    out += '\n';
  }
  return out;
}

EventStream read_events(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open event file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_events(ss.str(), path.string());
}

void write_events(const std::filesystem::path& path, const EventStream& stream) {
  validate(stream);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write event file " + path.string());
  out << format_events(stream);
  if (!out) throw IoError("write failed for " + path.string());
}

std::string frame_stem(int offset) { return "frame_" + std::to_string(offset); }

namespace {

constexpr std::array<int, 4> kInputOffsets{-2, -1, 1, 2};

void check_dims(const Tensor& img, std::size_t h, std::size_t w, const std::filesystem::path& p) {
  if (img.dim(0) != 3 || img.dim(1) != h || img.dim(2) != w) {
    throw IoError(p.string() + ": expected RGB " + std::to_string(w) + "x" + std::to_string(h) +
                  ", got " + shape_str(img.shape()));
  }
}

}  // namespace

SequenceSample load_sample(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("sample directory not found: " + dir.string());
  SequenceSample s;
  s.name = dir.filename().string();
  for (std::size_t i = 0; i < 4; ++i) {
    const auto p = dir / (frame_stem(kInputOffsets[i]) + ".ppm");
    if (!fs::exists(p)) throw IoError("missing frame " + p.string());
    s.frames[i] = read_image(p);
  }
  const std::size_t h = s.frames[0].dim(1), w = s.frames[0].dim(2);
  for (std::size_t i = 0; i < 4; ++i) {
    check_dims(s.frames[i], h, w, dir / (frame_stem(kInputOffsets[i]) + ".ppm"));
  }
  if (const auto gt = dir / (frame_stem(0) + ".ppm"); fs::exists(gt)) {
    s.ground_truth = read_image(gt);
    check_dims(*s.ground_truth, h, w, gt);
  }
  for (std::size_t k = 0; k < 4; ++k) {
    const auto p = dir / ("events_" + std::to_string(k) + ".txt");
    if (!fs::exists(p)) throw IoError("missing event file " + p.string());
    s.intervals[k] = read_events(p);
    if (static_cast<std::size_t>(s.intervals[k].width) != w ||
        static_cast<std::size_t>(s.intervals[k].height) != h) {
      throw IoError(p.string() + ": event dimensions do not match frames");
    }
  }
  for (std::size_t k = 0; k + 1 < 4; ++k) {
    if (s.intervals[k].t_end != s.intervals[k + 1].t_start) {
      throw IoError(dir.string() + ": intervals " + std::to_string(k) + " and " +
                    std::to_string(k + 1) + " are not contiguous");
    }
  }
  for (std::size_t k = 0; k < 4; ++k) s.timestamps[k] = s.intervals[k].t_start;
  s.timestamps[4] = s.intervals[3].t_end;
  if (const auto tp = dir / "timestamps.txt"; fs::exists(tp)) {
    std::ifstream in(tp);
    std::array<std::int64_t, 5> ts{};
    for (auto& t : ts) {
      if (!(in >> t)) throw IoError(tp.string() + ": expected five integer timestamps");
    }
    for (std::size_t k = 0; k < 4; ++k) {
      if (s.intervals[k].t_start != ts[k] || s.intervals[k].t_end != ts[k + 1]) {
        throw IoError(dir.string() + ": events_" + std::to_string(k) +
                      ".txt bounds disagree with frame timestamps");
      }
    }
  }
  return s;
}

void save_sample(const std::filesystem::path& dir, const SequenceSample& s) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (std::size_t i = 0; i < 4; ++i) {
    write_image(dir / (frame_stem(kInputOffsets[i]) + ".ppm"), s.frames[i]);
  }
  if (s.ground_truth) write_image(dir / (frame_stem(0) + ".ppm"), *s.ground_truth);
  for (std::size_t k = 0; k < 4; ++k) {
    write_events(dir / ("events_" + std::to_string(k) + ".txt"), s.intervals[k]);
  }
  std::ofstream ts(dir / "timestamps.txt");
  for (auto t : s.timestamps) ts << t << '\n';
  if (!ts) throw IoError("cannot write " + (dir / "timestamps.txt").string());
}

std::vector<std::filesystem::path> list_samples(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw IoError("dataset root not found: " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

std::vector<SequenceSample> load_dataset(const std::filesystem::path& root) {
  std::vector<SequenceSample> out;
  for (const auto& d : list_samples(root)) out.push_back(load_sample(d));
  if (out.empty()) throw IoError("dataset " + root.string() + " contains no samples");
  return out;
}

}  // namespace maevi
