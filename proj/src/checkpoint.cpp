#include "maevi/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "maevi/image.hpp"

namespace maevi {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

constexpr char kMagic[8] = {'M', 'A', 'E', 'V', 'I', 'C', 'K', 'P'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

class Reader {
 public:
  Reader(std::istream& in, std::string origin) : in_(in), origin_(std::move(origin)) {}

  template <typename T>
  T get() {
    T v{};
    bytes(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  }
  void bytes(char* dst, std::size_t n) {
    if (!in_.read(dst, static_cast<std::streamsize>(n))) throw IoError(origin_ + ": truncated checkpoint");
  }
  std::string string(std::uint32_t max_len) {
    const auto n = get<std::uint32_t>();
    if (n > max_len) throw IoError(origin_ + ": implausible string length");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

 private:
  std::istream& in_;
  std::string origin_;
};

}  // namespace

const Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw IoError("checkpoint has no tensor `" + name + "`");
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& entry : tensors) {
    if (entry.first == name) return true;
  }
  return false;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::int64_t>(out, ckpt.step);
  put<std::int64_t>(out, ckpt.epoch);
  const std::string cfg = ckpt.config.dump();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.size()));
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.ndim()));
    for (auto d : t.shape()) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  Reader r(in, path.string());
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw IoError(path.string() + ": not a checkpoint");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.step = r.get<std::int64_t>();
  ckpt.epoch = r.get<std::int64_t>();
  ckpt.config = KeyValueConfig::from_string(r.string(1u << 24), path.string());
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.string(4096);
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw IoError(path.string() + ": implausible rank for `" + name + "`");
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
    Tensor t(shape);
    r.bytes(reinterpret_cast<char*>(t.data().data()), t.numel() * sizeof(double));
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

}  // namespace maevi
