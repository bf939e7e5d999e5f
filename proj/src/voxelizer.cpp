#include "maevi/voxelizer.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace maevi {

Tensor voxelize(const EventStream& stream, std::size_t n_time_bins) {
  if (n_time_bins == 0) throw std::invalid_argument("voxelize: n_time_bins must be >= 1");
  if (stream.t_end <= stream.t_start) {
    throw std::invalid_argument("voxelize: empty interval [" + std::to_string(stream.t_start) +
                                ", " + std::to_string(stream.t_end) + "]");
  }
  const std::size_t H = stream.height, W = stream.width;
  Tensor vol({n_time_bins, H, W});
  auto d = vol.data();
  const double span = static_cast<double>(stream.t_end - stream.t_start);
  const double last = static_cast<double>(n_time_bins - 1);
  for (const Event& e : stream.events) {
    const std::size_t pix = static_cast<std::size_t>(e.y) * W + static_cast<std::size_t>(e.x);
    const double ts = static_cast<double>(e.t - stream.t_start) / span * last;
    const double fl = std::floor(ts);
    const auto b0 = static_cast<std::size_t>(fl);
    if (b0 >= n_time_bins - 1) {
      d[(n_time_bins - 1) * H * W + pix] += e.p;
      continue;
    }
    const double frac = ts - fl;
    d[b0 * H * W + pix] += e.p * (1.0 - frac);
    d[(b0 + 1) * H * W + pix] += e.p * frac;
  }
  return vol;
}

VoxelGrid voxelize_sample(const SequenceSample& sample, std::size_t n_time_bins) {
  const int W = sample.intervals[0].width, H = sample.intervals[0].height;
  for (const auto& iv : sample.intervals) {
    if (iv.width != W || iv.height != H) {
      throw std::invalid_argument("voxelize_sample: intervals differ in dimensions");
    }
  }
  VoxelGrid grid;
  grid.n_time_bins = n_time_bins;
  const std::size_t plane = n_time_bins * static_cast<std::size_t>(H) * static_cast<std::size_t>(W);
  grid.data = Tensor({4, n_time_bins, static_cast<std::size_t>(H), static_cast<std::size_t>(W)});
  for (std::size_t k = 0; k < 4; ++k) {
    const Tensor v = voxelize(sample.intervals[k], n_time_bins);
    std::copy(v.data().begin(), v.data().end(), grid.data.data().begin() + k * plane);
    grid.intervals[k] = {sample.intervals[k].t_start, sample.intervals[k].t_end};
  }
  return grid;
}

namespace {

static_assert(std::endian::native == std::endian::little, "dump format assumes little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& p) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError(p.string() + ": truncated dump");
  return v;
}

}  // namespace

void write_tensor_dump(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  put<std::int32_t>(out, static_cast<std::int32_t>(t.ndim()));
  for (auto d : t.shape()) put<std::int32_t>(out, static_cast<std::int32_t>(d));
  out.write(reinterpret_cast<const char*>(t.data().data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
  if (!out) throw IoError("write failed for " + path.string());
}

Tensor read_tensor_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const auto rank = get<std::int32_t>(in, path);
  if (rank < 0 || rank > 8) throw IoError(path.string() + ": implausible rank");
  Shape shape;
  for (std::int32_t i = 0; i < rank; ++i) {
    const auto d = get<std::int32_t>(in, path);
    if (d < 0) throw IoError(path.string() + ": negative dimension");
    shape.push_back(static_cast<std::size_t>(d));
  }
  Tensor t(shape);
  if (!in.read(reinterpret_cast<char*>(t.data().data()),
               static_cast<std::streamsize>(t.numel() * sizeof(double)))) {
    throw IoError(path.string() + ": truncated data");
  }
  return t;
}

}  // namespace maevi
