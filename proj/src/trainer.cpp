#include "maevi/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "maevi/ops.hpp"

namespace maevi {

namespace {

std::string number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

const std::vector<std::string>& TrainConfig::keys() {
  static const std::vector<std::string> k{"train.lr",     "train.beta1",  "train.beta2",
                                          "train.decay",  "train.batch_size", "train.epochs",
                                          "train.max_steps", "train.alpha", "train.seed"};
  return k;
}

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) throw ConfigError("train: lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("train: beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train: beta2 must lie in [0, 1)");
  if (!(decay > 0.0)) throw ConfigError("train: decay must be positive");
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("train: alpha must lie in [0, 1]");
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& cfg) {
  const std::set<std::string> known(keys().begin(), keys().end());
  for (const auto& entry : cfg.entries()) {
    if (entry.first.rfind("train.", 0) == 0 && !known.count(entry.first)) {
      throw ConfigError("config: unknown key `" + entry.first + "`");
    }
  }
  TrainConfig t;
  t.lr0 = cfg.get_double("train.lr", t.lr0);
  t.beta1 = cfg.get_double("train.beta1", t.beta1);
  t.beta2 = cfg.get_double("train.beta2", t.beta2);
  t.decay = cfg.get_double("train.decay", t.decay);
  const auto non_negative = [&](const char* key, std::size_t fallback) {
    const long v = cfg.get_int(key, static_cast<long>(fallback));
    if (v < 0) throw ConfigError(std::string("config: `") + key + "` must be non-negative");
    return static_cast<std::size_t>(v);
  };
  t.batch_size = non_negative("train.batch_size", t.batch_size);
  t.epochs = non_negative("train.epochs", t.epochs);
  t.max_steps = non_negative("train.max_steps", t.max_steps);
  t.alpha = cfg.get_double("train.alpha", t.alpha);
  t.seed = non_negative("train.seed", t.seed);
  t.validate();
  return t;
}

KeyValueConfig TrainConfig::to_config() const {
  KeyValueConfig c;
  c.set("train.lr", number(lr0));
  c.set("train.beta1", number(beta1));
  c.set("train.beta2", number(beta2));
  c.set("train.decay", number(decay));
  c.set("train.batch_size", std::to_string(batch_size));
  c.set("train.epochs", std::to_string(epochs));
  c.set("train.max_steps", std::to_string(max_steps));
  c.set("train.alpha", number(alpha));
  c.set("train.seed", std::to_string(seed));
  return c;
}

void adamax_step(std::span<double> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> u, double lr, double beta1, double beta2, std::int64_t t) {
  if (t < 1) throw std::invalid_argument("adamax_step: t must be >= 1");
  if (grad.size() != param.size() || m.size() != param.size() || u.size() != param.size()) {
    throw ShapeError("adamax_step: parameter, gradient and state sizes differ");
  }
  const double correction = 1.0 - std::pow(beta1, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
    u[i] = std::max(beta2 * u[i], std::abs(grad[i]));
    param[i] -= lr * m[i] / (correction * (u[i] + kAdamaxEps));
  }
}

Tensor training_loss(const ModelOutput& out, const PreparedSample& sample, const ModelConfig& model,
                     const LossConfig& loss) {
  if (!sample.ground_truth) throw TrainingError("sample `" + sample.name + "` has no ground-truth frame");
  const Tensor& gt = *sample.ground_truth;
  if (model.branch_loss == BranchLoss::Blended) {
    return motion_aware_loss(out.final_frame, gt, sample.loss_filter, loss);
  }
  const Tensor standard = clamp(out.standard.fused, 0.0, 1.0);
  const Tensor filtered = clamp(out.filtered.fused, 0.0, 1.0);
  return add(scale(loss_filtered(filtered, gt, sample.loss_filter), loss.alpha),
             scale(loss_full(standard, gt), 1.0 - loss.alpha));
}

void load_parameters(Model& model, const Checkpoint& ckpt) {
  for (auto& p : model.parameters()) {
    const Tensor& src = ckpt.get(p.name);
    if (src.shape() != p.value.shape()) {
      throw IoError("checkpoint tensor `" + p.name + "` has shape " + shape_str(src.shape()) +
                    ", model expects " + shape_str(p.value.shape()));
    }
    auto dst = p.value.data();
    std::copy(src.data().begin(), src.data().end(), dst.begin());
  }
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  Model model(ModelConfig::from_config(ckpt.config), 0);
  load_parameters(model, ckpt);
  return model;
}

Trainer::Trainer(Model& model, const TrainConfig& cfg)
    : model_(model), cfg_(cfg), params_(model.parameters()) {
  cfg_.validate();
  for (const auto& p : params_) {
    m_.emplace_back(p.value.numel(), 0.0);
    u_.emplace_back(p.value.numel(), 0.0);
  }
}

double Trainer::learning_rate() const {
  return cfg_.lr0 * std::pow(cfg_.decay, static_cast<double>(epoch_));
}

void Trainer::fail_non_finite(const std::string& detail) const {
  for (const auto& p : params_) {
    if (!all_finite(p.value.data())) {
      throw TrainingError(detail + "; parameter `" + p.name + "` holds non-finite values");
    }
    if (p.value.has_grad() && !all_finite(p.value.grad())) {
      throw TrainingError(detail + "; parameter `" + p.name + "` has a non-finite gradient");
    }
  }
  std::string worst = "<none>";
  double largest = -1.0;
  for (const auto& p : params_) {
    for (double v : p.value.data()) {
      if (std::abs(v) > largest) {
        largest = std::abs(v);
        worst = p.name;
      }
    }
  }
  throw TrainingError(detail + "; all parameters finite, largest magnitude in `" + worst + "` (" +
                      number(largest) + ")");
}

double Trainer::step(const std::vector<const PreparedSample*>& batch, double lr) {
  if (batch.empty()) throw TrainingError("empty batch");
  for (auto& p : params_) p.value.zero_grad();
  const LossConfig loss_cfg{cfg_.alpha};
  double total = 0.0;
  for (const PreparedSample* sample : batch) {
    Tensor loss;
    try {
      loss = scale(training_loss(model_.forward(*sample), *sample, model_.config(), loss_cfg),
                   1.0 / static_cast<double>(batch.size()));
    } catch (const NonFiniteError& e) {
      fail_non_finite("non-finite value at step " + std::to_string(t_ + 1) + " on sample `" +
                      sample->name + "`: " + e.what());
    }
    if (!std::isfinite(loss.item())) {
      fail_non_finite("non-finite loss at step " + std::to_string(t_ + 1));
    }
    total += loss.item();
    backward(loss);
  }
  ++t_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (p.value.has_grad() && !all_finite(p.value.grad())) {
      fail_non_finite("non-finite gradient at step " + std::to_string(t_));
    }
    const std::vector<double> zeros(p.value.has_grad() ? 0 : p.value.numel(), 0.0);
    const std::span<const double> g = p.value.has_grad() ? p.value.grad() : std::span<const double>(zeros);
    adamax_step(p.value.data(), g, m_[i], u_[i], lr, cfg_.beta1, cfg_.beta2, t_);
  }
  return total;
}

std::vector<double> Trainer::train(const std::vector<PreparedSample>& samples,
                                   const std::function<void(std::int64_t, double)>& on_step) {
  if (samples.empty()) throw TrainingError("training needs at least one sample");
  std::vector<double> curve;
  const auto capped = [&] { return cfg_.max_steps != 0 && t_ >= static_cast<std::int64_t>(cfg_.max_steps); };
  while (epoch_ < static_cast<std::int64_t>(cfg_.epochs) && !capped()) {
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(cfg_.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(epoch_));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    const double lr = learning_rate();
    for (std::size_t b = 0; b < order.size() && !capped(); b += cfg_.batch_size) {
      std::vector<const PreparedSample*> batch;
      for (std::size_t k = b; k < std::min(order.size(), b + cfg_.batch_size); ++k) {
        batch.push_back(&samples[order[k]]);
      }
      const double loss = step(batch, lr);
      curve.push_back(loss);
      if (on_step) on_step(t_, loss);
    }
    if (!capped()) ++epoch_;
  }
  return curve;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config = model_.config().to_config();
  c.config.merge(cfg_.to_config());
  c.step = t_;
  c.epoch = epoch_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    c.tensors.emplace_back(params_[i].name, params_[i].value.detach().clone());
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Shape& s = params_[i].value.shape();
    c.tensors.emplace_back("adamax.m/" + params_[i].name, Tensor(s, m_[i]));
    c.tensors.emplace_back("adamax.u/" + params_[i].name, Tensor(s, u_[i]));
  }
  return c;
}

void Trainer::restore(const Checkpoint& ckpt) {
  load_parameters(model_, ckpt);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& m = ckpt.get("adamax.m/" + params_[i].name).data();
    const auto& u = ckpt.get("adamax.u/" + params_[i].name).data();
    if (m.size() != m_[i].size() || u.size() != u_[i].size()) {
      throw IoError("checkpoint optimizer state for `" + params_[i].name + "` has the wrong size");
    }
    std::copy(m.begin(), m.end(), m_[i].begin());
    std::copy(u.begin(), u.end(), u_[i].begin());
  }
  t_ = ckpt.step;
  epoch_ = ckpt.epoch;
}

}  // namespace maevi
