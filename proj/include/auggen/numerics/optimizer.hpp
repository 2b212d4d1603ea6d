#pragma once

#include <vector>

#include "auggen/numerics/parameter.hpp"

namespace auggen::numerics {

// Step-decay SGD settings. Defaults are the discriminator recipe: momentum
// 0.9, weight decay 5e-4, lr 0.1 decayed by 0.1 at epochs 12, 24 and 26.
struct SgdConfig {
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<int> milestone_epochs{12, 24, 26};
  double decay_factor = 0.1;
  int warmup_epochs = 0;  // linear ramp from 0 over this many epochs

  void validate() const;
};

// base * decay_factor^k where k counts milestones <= epoch. Pure in epoch.
double milestone_lr(const SgdConfig& cfg, int epoch);

// Learning rate at fractional progress, including warmup.
double scheduled_lr(const SgdConfig& cfg, int epoch, double epoch_fraction);

// Heavy-ball SGD with coupled weight decay. Per step, in this order:
//   v <- momentum * v + grad + weight_decay * p
//   p <- p - lr * v
class SgdOptimizer {
 public:
  SgdOptimizer(SgdConfig cfg, const ParamList<float>& params);

  void set_learning_rate(double lr) { lr_ = lr; }
  double learning_rate() const { return lr_; }
  // Throws if any parameter has no gradient since the last zero_grad.
  void step(const ParamList<float>& params);
  const std::vector<Tensor>& velocity() const { return velocity_; }
  const SgdConfig& config() const { return cfg_; }

 private:
  SgdConfig cfg_;
  double lr_;
  std::vector<Tensor> velocity_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamOptimizer {
 public:
  AdamOptimizer(AdamConfig cfg, const ParamList<float>& params);
  void set_learning_rate(double lr) { cfg_.learning_rate = lr; }
  void step(const ParamList<float>& params);
  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

// Exponential moving average of parameters.
struct EmaState {
  ParameterSet shadow;
  double decay = 0.999;
};

EmaState make_ema(const ParamList<float>& params, double decay);

// shadow <- decay * shadow + (1 - decay) * params, elementwise.
void ema_update(EmaState& ema, const ParamList<float>& params);

// Per-step decay whose averaging window, 1 / (1 - decay), spans
// `length_fraction` of `total_steps`. With length 0.1 over 1000 steps the
// window is 100 steps and decay = 0.99. Windows shorter than one step give
// decay 0 (shadow tracks the raw weights).
double ema_decay_for_length(double length_fraction, long total_steps);

void zero_grads(const ParamList<float>& params);

}  // namespace auggen::numerics
