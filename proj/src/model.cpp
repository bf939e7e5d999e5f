#include "maevi/model.hpp"

#include <set>
#include <sstream>

#include "maevi/ops.hpp"

namespace maevi {

namespace {

std::vector<double> parse_doubles(const std::string& s, const std::string& key) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("config: bad number `" + item + "` for key `" + key + "`");
    }
  }
  return out;
}

template <typename T>
std::string join(const T& values) {
  std::ostringstream os;
  os.precision(17);
  bool first = true;
  for (const auto& v : values) {
    if (!first) os << ',';
    os << v;
    first = false;
  }
  return os.str();
}

std::size_t get_size(const KeyValueConfig& cfg, const std::string& key, std::size_t fallback) {
  const long v = cfg.get_int(key, static_cast<long>(fallback));
  if (v < 0) throw ConfigError("config: `" + key + "` must be non-negative");
  return static_cast<std::size_t>(v);
}

}  // namespace

const std::vector<std::string>& ModelConfig::keys() {
  static const std::vector<std::string> k{
      "model.heads",  "model.embed_dim",  "model.widths",     "model.time_bins",
      "model.hidden", "model.kernel_side", "model.max_offset", "model.sigmas",
      "model.combine", "model.branch_loss", "model.region_filter", "model.tie_branches"};
  return k;
}

void ModelConfig::validate() const {
  encoder.validate();
  if (hidden == 0) throw ConfigError("model: hidden must be positive");
  if (kernel_side == 0 || kernel_side % 2 == 0) throw ConfigError("model: kernel_side must be odd");
  if (!(max_offset >= 0.0)) throw ConfigError("model: max_offset must be >= 0");
  if (filter == FilterMode::Events && sigmas.empty()) throw ConfigError("model: sigmas is empty");
  for (double s : sigmas) {
    if (!(s > 0.0)) throw ConfigError("model: sigmas must be positive");
  }
}

ModelConfig ModelConfig::from_config(const KeyValueConfig& cfg) {
  const std::set<std::string> known(keys().begin(), keys().end());
  for (const auto& [key, value] : cfg.entries()) {
    if (key.rfind("model.", 0) == 0 && !known.count(key)) {
      throw ConfigError("config: unknown key `" + key + "`");
    }
  }
  ModelConfig m;
  m.encoder.n_heads = get_size(cfg, "model.heads", m.encoder.n_heads);
  m.encoder.embed_dim = get_size(cfg, "model.embed_dim", m.encoder.embed_dim);
  m.encoder.n_time_bins = get_size(cfg, "model.time_bins", m.encoder.n_time_bins);
  if (cfg.has("model.widths")) {
    const auto w = parse_doubles(cfg.get_string("model.widths", ""), "model.widths");
    if (w.size() != 3) throw ConfigError("config: `model.widths` needs three values");
    for (std::size_t s = 0; s < 3; ++s) m.encoder.widths[s] = static_cast<std::size_t>(w[s]);
  }
  m.hidden = get_size(cfg, "model.hidden", m.hidden);
  m.kernel_side = get_size(cfg, "model.kernel_side", m.kernel_side);
  m.max_offset = cfg.get_double("model.max_offset", m.max_offset);
  if (cfg.has("model.sigmas")) m.sigmas = parse_doubles(cfg.get_string("model.sigmas", ""), "model.sigmas");

  const std::string combine = cfg.get_string("model.combine", "gated");
  if (combine == "gated") m.combine = BranchCombine::Gated;
  else if (combine == "mean") m.combine = BranchCombine::Mean;
  else throw ConfigError("config: `model.combine` must be gated or mean, got `" + combine + "`");

  const std::string bl = cfg.get_string("model.branch_loss", "blended");
  if (bl == "blended") m.branch_loss = BranchLoss::Blended;
  else if (bl == "separate") m.branch_loss = BranchLoss::Separate;
  else throw ConfigError("config: `model.branch_loss` must be blended or separate, got `" + bl + "`");

  const std::string rf = cfg.get_string("model.region_filter", "events");
  if (rf == "events") m.filter = FilterMode::Events;
  else if (rf == "ones") m.filter = FilterMode::Ones;
  else throw ConfigError("config: `model.region_filter` must be events or ones, got `" + rf + "`");

  m.tie_branches = cfg.get_bool("model.tie_branches", m.tie_branches);
  m.validate();
  return m;
}

KeyValueConfig ModelConfig::to_config() const {
  KeyValueConfig c;
  c.set("model.heads", std::to_string(encoder.n_heads));
  c.set("model.embed_dim", std::to_string(encoder.embed_dim));
  c.set("model.widths", join(encoder.widths));
  c.set("model.time_bins", std::to_string(encoder.n_time_bins));
  c.set("model.hidden", std::to_string(hidden));
  c.set("model.kernel_side", std::to_string(kernel_side));
  c.set("model.max_offset", join(std::vector<double>{max_offset}));
  c.set("model.sigmas", join(sigmas));
  c.set("model.combine", combine == BranchCombine::Gated ? "gated" : "mean");
  c.set("model.branch_loss", branch_loss == BranchLoss::Blended ? "blended" : "separate");
  c.set("model.region_filter", filter == FilterMode::Events ? "events" : "ones");
  c.set("model.tie_branches", tie_branches ? "true" : "false");
  return c;
}

PreparedSample prepare_sample(const SequenceSample& sample, const ModelConfig& cfg) {
  PreparedSample p;
  p.name = sample.name;
  const VoxelGrid vox = voxelize_sample(sample, cfg.encoder.n_time_bins);
  p.voxels = vox.data;
  p.frames = stack_frames(sample.frames);
  p.filter = cfg.filter == FilterMode::Events ? region_filter(vox, cfg.sigmas)
                                              : ones_filter(sample.height(), sample.width());
  p.filtered_frames = stack_frames(apply_filter(sample.frames, p.filter));
  p.loss_filter = loss_filter(p.filter);
  p.ground_truth = sample.ground_truth;
  return p;
}

Tensor combine_branches(const Tensor& standard, const Tensor& filtered, const LossFilter& lf,
                        BranchCombine mode) {
  if (mode == BranchCombine::Mean) return clamp(scale(add(standard, filtered), 0.5), 0.0, 1.0);
  const Tensor keep = add_scalar(scale(lf.weights, -1.0), 1.0);
  return clamp(add(mul_plane(standard, keep), filtered), 0.0, 1.0);
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  encoder_ = Encoder(cfg_.encoder, rng);
  const double radius[3] = {cfg_.max_offset, cfg_.max_offset / 2.0, cfg_.max_offset / 4.0};
  for (std::size_t s = 0; s < 3; ++s) {
    standard_[s] = SynBlock::create(cfg_.encoder.widths[s], cfg_.hidden, cfg_.kernel_side, radius[s], rng);
  }
  for (std::size_t s = 0; s < 3; ++s) {
    filtered_[s] = cfg_.tie_branches
                       ? standard_[s]
                       : SynBlock::create(cfg_.encoder.widths[s], cfg_.hidden, cfg_.kernel_side, radius[s], rng);
  }
}

ModelOutput Model::forward(const PreparedSample& sample) const {
  const FeatureMaps features = encoder_.encode(sample.voxels);
  ModelOutput out;
  out.standard = forward_branch(features, sample.frames, standard_);
  out.filtered = forward_branch(features, sample.filtered_frames, filtered_);
  out.final_frame = combine_branches(out.standard.fused, out.filtered.fused, sample.loss_filter, cfg_.combine);
  return out;
}

ParameterList Model::parameters() const {
  ParameterList out;
  encoder_.collect(out, "encoder.");
  for (std::size_t s = 0; s < 3; ++s) standard_[s].collect(out, "standard.syn" + std::to_string(s) + ".");
  if (!cfg_.tie_branches) {
    for (std::size_t s = 0; s < 3; ++s) filtered_[s].collect(out, "filtered.syn" + std::to_string(s) + ".");
  }
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.value.numel();
  return n;
}

}  // namespace maevi
