#include "maevi/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

namespace maevi {

namespace {

// Next whitespace-delimited header token, skipping `#` comments.
std::string header_token(std::istream& in, const std::filesystem::path& path) {
  std::string tok;
  while (true) {
    int c = in.get();
    if (c == EOF) throw IoError(path.string() + ": truncated netpbm header");
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
}

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Tensor read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  const std::string magic = header_token(in, path);
  std::size_t channels = 0;
  if (magic == "P6") channels = 3;
  else if (magic == "P5") channels = 1;
  else throw IoError(path.string() + ": unsupported raster format `" + magic + "` (need P5/P6)");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(header_token(in, path));
    h = std::stoul(header_token(in, path));
    maxval = std::stoul(header_token(in, path));
  } catch (const std::invalid_argument&) {
    throw IoError(path.string() + ": malformed netpbm header");
  }
  if (maxval != 255) throw IoError(path.string() + ": only 8-bit rasters are supported");
  if (w == 0 || h == 0) throw IoError(path.string() + ": empty raster");
  std::vector<unsigned char> bytes(w * h * channels);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw IoError(path.string() + ": truncated pixel data");
  }
  Tensor img({channels, h, w});
  auto d = img.data();
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < channels; ++c)
        d[(c * h + y) * w + x] = bytes[(y * w + x) * channels + c] / 255.0;
  return img;
}

void write_image(const std::filesystem::path& path, const Tensor& image) {
  if (image.ndim() != 3 || (image.dim(0) != 1 && image.dim(0) != 3)) {
    throw IoError("write_image: expected [1|3, H, W], got " + shape_str(image.shape()));
  }
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  std::vector<unsigned char> bytes(c * h * w);
  auto d = image.data();
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch)
        bytes[(y * w + x) * c + ch] = to_byte(d[(ch * h + y) * w + x]);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path.string());
  out << (c == 3 ? "P6" : "P5") << '\n' << w << ' ' << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Tensor quantize_8bit(const Tensor& image) {
  Tensor q = image.detach();
  for (auto& v : q.data()) v = to_byte(v) / 255.0;
  return q;
}

}  // namespace maevi
