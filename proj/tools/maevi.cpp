#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "maevi/event_sim.hpp"
#include "maevi/loss_metrics.hpp"
#include "maevi/ops.hpp"
#include "maevi/parallel.hpp"
#include "maevi/trainer.hpp"

namespace {

using namespace maevi;
namespace fs = std::filesystem;

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  std::vector<std::string> overrides;
};

KeyValueConfig load_config(const Common& c) {
  KeyValueConfig cfg = c.config.empty() ? KeyValueConfig{} : KeyValueConfig::from_file(c.config);
  for (const auto& o : c.overrides) cfg.apply_override(o);
  return cfg;
}

ModelConfig model_config(const KeyValueConfig& cfg) {
  std::set<std::string> known(ModelConfig::keys().begin(), ModelConfig::keys().end());
  known.insert(TrainConfig::keys().begin(), TrainConfig::keys().end());
  cfg.require_known(known, "config");
  return ModelConfig::from_config(cfg);
}

void require_dir(const std::string& path, const char* what) {
  if (!fs::is_directory(path)) throw IoError(std::string(what) + " `" + path + "` is not a directory");
}

void require_out(const Common& c, const char* sub) {
  if (c.out.empty()) throw ConfigError(std::string(sub) + ": --out is required");
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "key = value config file")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "random seed");
  sub->add_option("--out", c.out, "output path");
}

// [N, H, W] stack -> [1, H, W] image of plane i.
Tensor plane_image(const Tensor& stack, std::size_t i) {
  const std::size_t H = stack.dim(stack.ndim() - 2), W = stack.dim(stack.ndim() - 1);
  Tensor out({1, H, W});
  std::copy_n(stack.data().begin() + i * H * W, H * W, out.data().begin());
  return out;
}

int run_gen(const Common& c, std::size_t n) {
  require_out(c, "gen");
  if (c.config.empty()) throw ConfigError("gen: --config <scene file> is required");
  const SceneSpec spec = parse_scene(load_config(c));
  make_dataset(spec, n, c.out, c.seed);
  std::cout << "wrote " << n << " samples to " << c.out << "\n";
  return 0;
}

int run_voxelize(const Common& c, const std::string& sample_dir) {
  require_out(c, "voxelize");
  require_dir(sample_dir, "sample");
  const ModelConfig mc = model_config(load_config(c));
  const VoxelGrid vox = voxelize_sample(load_sample(sample_dir), mc.encoder.n_time_bins);
  write_tensor_dump(c.out, vox.data);
  std::cout << "voxels " << shape_str(vox.data.shape()) << " -> " << c.out << "\n";
  return 0;
}

int run_filter(const Common& c, const std::string& sample_dir) {
  require_out(c, "filter");
  require_dir(sample_dir, "sample");
  const ModelConfig mc = model_config(load_config(c));
  const VoxelGrid vox = voxelize_sample(load_sample(sample_dir), mc.encoder.n_time_bins);
  const RegionFilter rf = region_filter(vox, mc.sigmas);
  const LossFilter lf = loss_filter(rf);
  fs::create_directories(c.out);
  for (std::size_t i = 0; i < 4; ++i) {
    write_image(fs::path(c.out) / ("filter_" + std::to_string(i) + ".pgm"), plane_image(rf.weights, i));
  }
  write_image(fs::path(c.out) / "loss_filter.pgm", plane_image(lf.weights, 0));
  write_tensor_dump(fs::path(c.out) / "filter.bin", rf.weights);
  std::cout << "filters -> " << c.out << "\n";
  return 0;
}

int run_interp(const Common& c, const std::string& checkpoint, const std::string& sample_dir,
               bool branches) {
  require_out(c, "interp");
  require_dir(sample_dir, "sample");
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const Model model = model_from_checkpoint(ckpt);
  const PreparedSample sample = prepare_sample(load_sample(sample_dir), model.config());
  NoGradGuard no_grad;
  const ModelOutput out = model.forward(sample);
  fs::create_directories(c.out);
  write_image(fs::path(c.out) / "frame_0.ppm", out.final_frame);
  if (branches) {
    write_image(fs::path(c.out) / "standard.ppm", clamp(out.standard.fused, 0.0, 1.0));
    write_image(fs::path(c.out) / "filtered.ppm", clamp(out.filtered.fused, 0.0, 1.0));
  }
  std::cout << "interpolated " << sample.name << " -> " << c.out << "\n";
  return 0;
}

int run_train(const Common& c, const std::string& dataset, std::size_t save_every) {
  require_out(c, "train");
  require_dir(dataset, "dataset");
  KeyValueConfig cfg = load_config(c);
  const ModelConfig mc = model_config(cfg);
  if (!cfg.has("train.seed")) cfg.set("train.seed", std::to_string(c.seed));
  const TrainConfig tc = TrainConfig::from_config(cfg);
  std::vector<PreparedSample> samples;
  for (const auto& s : load_dataset(dataset)) samples.push_back(prepare_sample(s, mc));
  if (samples.empty()) throw IoError("dataset `" + dataset + "` contains no samples");

  Model model(mc, tc.seed);
  Trainer trainer(model, tc);
  fs::create_directories(c.out);
  std::ofstream log(fs::path(c.out) / "loss.tsv");
  log << "step\tepoch\tlr\tloss\n";
  log.precision(10);
  const std::size_t per_epoch = (samples.size() + tc.batch_size - 1) / tc.batch_size;
  trainer.train(samples, [&](std::int64_t step, double loss) {
    log << step << '\t' << trainer.epochs_done() << '\t' << trainer.learning_rate() << '\t' << loss << '\n';
    const auto epoch = static_cast<std::size_t>(step) / per_epoch;
    if (save_every != 0 && static_cast<std::size_t>(step) % per_epoch == 0 && epoch % save_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04zu.ckpt", epoch);
      Checkpoint ck = trainer.checkpoint();
      ck.epoch = static_cast<std::int64_t>(epoch);
      save_checkpoint(fs::path(c.out) / name, ck);
    }
  });
  save_checkpoint(fs::path(c.out) / "final.ckpt", trainer.checkpoint());
  std::cout << "trained " << trainer.steps_done() << " steps over " << samples.size()
            << " samples -> " << (fs::path(c.out) / "final.ckpt").string() << "\n";
  return 0;
}

int run_eval(const Common& c, const std::string& checkpoint, const std::string& predictions,
             const std::string& dataset) {
  require_dir(dataset, "dataset");
  if (checkpoint.empty() == predictions.empty()) {
    throw ConfigError("eval: give exactly one of --checkpoint or --predictions");
  }
  std::optional<Model> model;
  ModelConfig mc;
  if (!checkpoint.empty()) {
    model = model_from_checkpoint(load_checkpoint(checkpoint));
    mc = model->config();
  } else {
    mc = model_config(load_config(c));
  }
  std::ostringstream table;
  table << "sample\tpsnr\tssim\tmasked_psnr\n";
  double sums[3] = {0, 0, 0};
  std::size_t counts[3] = {0, 0, 0};
  NoGradGuard no_grad;
  for (const auto& dir : list_samples(dataset)) {
    const SequenceSample s = load_sample(dir);
    if (!s.ground_truth) throw IoError("sample `" + s.name + "` has no ground-truth frame_0");
    const Tensor& gt = *s.ground_truth;
    Tensor pred;
    if (model) {
      pred = model->forward(prepare_sample(s, mc)).final_frame;
    } else {
      pred = read_image(fs::path(predictions) / s.name / "frame_0.ppm");
    }
    const VoxelGrid vox = voxelize_sample(s, mc.encoder.n_time_bins);
    const LossFilter lf = loss_filter(region_filter(vox, mc.sigmas));
    const double values[2] = {psnr(pred, gt), ssim(pred, gt)};
    table << s.name << '\t' << format_metric(values[0]) << '\t' << format_metric(values[1]) << '\t';
    for (int k = 0; k < 2; ++k) {
      sums[k] += values[k];
      ++counts[k];
    }
    try {
      const double m = masked_psnr(pred, gt, lf);
      sums[2] += m;
      ++counts[2];
      table << format_metric(m) << '\n';
    } catch (const std::invalid_argument&) {
      table << "n/a\n";
    }
  }
  table << "mean";
  for (int k = 0; k < 3; ++k) {
    table << '\t' << (counts[k] ? format_metric(sums[k] / static_cast<double>(counts[k])) : "n/a");
  }
  table << '\n';
  if (!c.out.empty()) {
    std::ofstream f(c.out);
    if (!f) throw IoError("cannot write " + c.out);
    f << table.str();
  }
  std::cout << table.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-assisted video frame interpolation toolkit"};
  app.require_subcommand(1);
  Common common;
  std::size_t n_samples = 1, save_every = 0;
  std::string path, checkpoint, predictions;
  bool branches = false;

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset from a scene config");
  add_common(gen, common);
  gen->add_option("-n,--samples", n_samples, "number of samples")->check(CLI::PositiveNumber);
  gen->add_option("overrides", common.overrides, "key=value overrides");

  auto* vox = app.add_subcommand("voxelize", "write the voxel grid of one sample");
  add_common(vox, common);
  vox->add_option("sample", path, "sample directory")->required();
  vox->add_option("overrides", common.overrides, "key=value overrides");

  auto* filt = app.add_subcommand("filter", "write the moving-region filters of one sample");
  add_common(filt, common);
  filt->add_option("sample", path, "sample directory")->required();
  filt->add_option("overrides", common.overrides, "key=value overrides");

  auto* interp = app.add_subcommand("interp", "interpolate the middle frame of one sample");
  add_common(interp, common);
  interp->add_option("--checkpoint", checkpoint, "trained checkpoint")->required()->check(CLI::ExistingFile);
  interp->add_flag("--branches", branches, "also write both branch frames");
  interp->add_option("sample", path, "sample directory")->required();

  auto* train = app.add_subcommand("train", "train a model on a dataset");
  add_common(train, common);
  train->add_option("dataset", path, "dataset root")->required();
  train->add_option("--save-every", save_every, "write a checkpoint every N epochs (0: final only)");
  train->add_option("overrides", common.overrides, "key=value overrides");

  auto* eval = app.add_subcommand("eval", "PSNR / SSIM / masked PSNR per sample");
  add_common(eval, common);
  eval->add_option("--checkpoint", checkpoint, "trained checkpoint")->check(CLI::ExistingFile);
  eval->add_option("--predictions", predictions, "root holding <sample>/frame_0.ppm");
  eval->add_option("dataset", path, "dataset root")->required();
  eval->add_option("overrides", common.overrides, "key=value overrides");

  CLI11_PARSE(app, argc, argv);
  configure_threads();
  try {
    if (gen->parsed()) return run_gen(common, n_samples);
    if (vox->parsed()) return run_voxelize(common, path);
    if (filt->parsed()) return run_filter(common, path);
    if (interp->parsed()) return run_interp(common, checkpoint, path, branches);
    if (train->parsed()) return run_train(common, path, save_every);
    if (eval->parsed()) return run_eval(common, checkpoint, predictions, path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
