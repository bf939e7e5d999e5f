#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "maevi/checkpoint.hpp"
#include "maevi/loss_metrics.hpp"
#include "maevi/model.hpp"

namespace maevi {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double lr0 = 0.0016;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double decay = 0.95;  // per-epoch multiplicative LR decay
  std::size_t batch_size = 1;
  std::size_t epochs = 60;
  std::size_t max_steps = 0;  // 0: no cap
  double alpha = 0.6;
  std::uint64_t seed = 0;

  void validate() const;
  /// Reads the `train.*` keys; unknown `train.*` keys are rejected.
  static TrainConfig from_config(const KeyValueConfig& cfg);
  KeyValueConfig to_config() const;
  static const std::vector<std::string>& keys();
};

inline constexpr double kAdamaxEps = 1e-8;

/// One AdaMax update at step t >= 1, element-wise over equal-length spans.
void adamax_step(std::span<double> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> u, double lr, double beta1, double beta2, std::int64_t t);

/// Training loss of one sample under the model's branch-loss mode.
Tensor training_loss(const ModelOutput& out, const PreparedSample& sample, const ModelConfig& model,
                     const LossConfig& loss);

/// Copies named parameter values out of `ckpt` into `model`.
void load_parameters(Model& model, const Checkpoint& ckpt);
/// Builds the model described by the checkpoint's config echo and loads it.
Model model_from_checkpoint(const Checkpoint& ckpt);

class Trainer {
 public:
  Trainer(Model& model, const TrainConfig& cfg);

  /// Forward, backward and one AdaMax update over `batch`; returns the mean loss.
  double step(const std::vector<const PreparedSample*>& batch, double lr);

  /// Runs epochs (shuffled per epoch) until cfg.epochs or cfg.max_steps is
  /// reached. `on_step(step, loss)` is called after every update.
  std::vector<double> train(const std::vector<PreparedSample>& samples,
                            const std::function<void(std::int64_t, double)>& on_step = {});

  double learning_rate() const;
  std::int64_t steps_done() const { return t_; }
  std::int64_t epochs_done() const { return epoch_; }

  Checkpoint checkpoint() const;
  /// Restores parameters, optimizer state and counters.
  void restore(const Checkpoint& ckpt);

 private:
  [[noreturn]] void fail_non_finite(const std::string& detail) const;

  Model& model_;
  TrainConfig cfg_;
  ParameterList params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> u_;
  std::int64_t t_ = 0;
  std::int64_t epoch_ = 0;
  std::mt19937_64 rng_;
};

}  // namespace maevi
