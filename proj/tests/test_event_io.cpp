#include <gtest/gtest.h>

#include <fstream>

#include "maevi/event_sim.hpp"
#include "maevi/events.hpp"
#include "maevi/image.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace maevi;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_events(text, "ev.txt");
  } catch (const IoError& e) {
    return e.what();
  }
  return "";
}

EventStream random_stream(std::size_t n, std::mt19937_64& rng) {
  EventStream s;
  s.width = 32;
  s.height = 24;
  s.t_start = 1000;
  s.t_end = 51000;
  std::uniform_int_distribution<std::int64_t> t(s.t_start, s.t_end);
  std::uniform_int_distribution<int> x(0, s.width - 1), y(0, s.height - 1), p(0, 1);
  for (std::size_t i = 0; i < n; ++i) s.events.push_back({t(rng), x(rng), y(rng), p(rng) ? 1 : -1});
  std::stable_sort(s.events.begin(), s.events.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
  return s;
}

}  // namespace

TEST(EventIo, HeaderOnlyGivesEmptyStream) {
  const EventStream s = parse_events("8 8 0 1000\n");
  EXPECT_TRUE(s.events.empty());
  EXPECT_EQ(s.width, 8);
  EXPECT_EQ(s.t_end, 1000);
}

TEST(EventIo, SingleLine) {
  const EventStream s = parse_events("8 8 0 1000\n500,3,4,1\n");
  ASSERT_EQ(s.events.size(), 1u);
  EXPECT_EQ(s.events[0], (Event{500, 3, 4, 1}));
}

TEST(EventIo, ErrorsNameTheLine) {
  EXPECT_NE(error_of("8 8 0 1000\n1,1,1,1\nbad\n").find("ev.txt:3:"), std::string::npos);
  EXPECT_NE(error_of("8 8 0 1000\n1,8,1,1\n").find("ev.txt:2:"), std::string::npos);
  EXPECT_NE(error_of("8 8 0 1000\n5,1,1,1\n4,1,1,1\n").find("ev.txt:3:"), std::string::npos);
  EXPECT_NE(error_of("8 8 0 1000\n5,1,1,0\n").find("ev.txt:2:"), std::string::npos);
  EXPECT_NE(error_of("8 8 0 1000\n2000,1,1,1\n").find("ev.txt:2:"), std::string::npos);
  EXPECT_NE(error_of("8 8 10 10\n").find("ev.txt:1:"), std::string::npos);
}

TEST(EventIo, RoundTripTenThousandEvents) {
  std::mt19937_64 rng(31);
  const EventStream s = random_stream(10000, rng);
  TempDir dir;
  write_events(dir / "e.txt", s);
  EXPECT_EQ(read_events(dir / "e.txt"), s);
  EXPECT_EQ(parse_events(format_events(s)), s);
}

TEST(EventIo, ImageRoundTripIsLossless) {
  std::mt19937_64 rng(32);
  const Tensor img = quantize_8bit(oracle::random_tensor({3, 7, 5}, rng, 0.0, 1.0));
  TempDir dir;
  write_image(dir / "a.ppm", img);
  EXPECT_EQ(oracle::max_abs_diff(read_image(dir / "a.ppm").data(), img.data()), 0.0);
  const Tensor gray = quantize_8bit(oracle::random_tensor({1, 4, 6}, rng, 0.0, 1.0));
  write_image(dir / "g.pgm", gray);
  EXPECT_EQ(read_image(dir / "g.pgm").shape(), (Shape{1, 4, 6}));
  EXPECT_THROW(read_image(dir / "missing.ppm"), IoError);
}

TEST(EventIo, SimulatorSampleLoads) {
  const SceneSpec spec = load_scene(MAEVI_SCENE);
  TempDir dir;
  save_sample(dir / "s", make_sample(spec, "s"));
  const SequenceSample s = load_sample(dir / "s");
  EXPECT_EQ(s.height(), 64u);
  EXPECT_EQ(s.width(), 64u);
  ASSERT_TRUE(s.ground_truth.has_value());
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(s.intervals[k].t_start, s.timestamps[k]);
    EXPECT_EQ(s.intervals[k].t_end, s.timestamps[k + 1]);
  }
}

TEST(EventIo, MissingGroundTruthIsAllowed) {
  const SceneSpec spec = load_scene(MAEVI_SCENE);
  TempDir dir;
  save_sample(dir / "s", make_sample(spec, "s"));
  std::filesystem::remove(dir / "s" / "frame_0.ppm");
  EXPECT_FALSE(load_sample(dir / "s").ground_truth.has_value());
}

TEST(EventIo, MisalignedIntervalIsRejected) {
  const SceneSpec spec = load_scene(MAEVI_SCENE);
  TempDir dir;
  SequenceSample s = make_sample(spec, "s");
  s.intervals[2].t_start += 5;
  save_sample(dir / "s", s);
  EXPECT_THROW(load_sample(dir / "s"), IoError);
}

TEST(EventIo, MismatchedFrameSizeIsRejected) {
  const SceneSpec spec = load_scene(MAEVI_SCENE);
  TempDir dir;
  save_sample(dir / "s", make_sample(spec, "s"));
  write_image(dir / "s" / "frame_1.ppm", Tensor({3, 8, 8}));
  EXPECT_THROW(load_sample(dir / "s"), IoError);
  std::filesystem::remove(dir / "s" / "events_2.txt");
  EXPECT_THROW(load_sample(dir / "s"), IoError);
}
