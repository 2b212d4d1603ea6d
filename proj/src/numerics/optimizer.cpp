#include "auggen/numerics/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace auggen::numerics {

void SgdConfig::validate() const {
  if (!(learning_rate > 0)) throw InvalidArgument("sgd: learning rate must be positive");
  if (momentum < 0 || momentum >= 1) throw InvalidArgument("sgd: momentum must be in [0, 1)");
  if (weight_decay < 0) throw InvalidArgument("sgd: weight decay must be >= 0");
  if (!(decay_factor > 0 && decay_factor <= 1)) {
    throw InvalidArgument("sgd: decay factor must be in (0, 1]");
  }
  if (!std::is_sorted(milestone_epochs.begin(), milestone_epochs.end())) {
    throw InvalidArgument("sgd: milestones must be sorted");
  }
}

double milestone_lr(const SgdConfig& cfg, int epoch) {
  const auto passed = std::count_if(cfg.milestone_epochs.begin(), cfg.milestone_epochs.end(),
                                    [&](int m) { return m <= epoch; });
  return cfg.learning_rate * std::pow(cfg.decay_factor, static_cast<double>(passed));
}

double scheduled_lr(const SgdConfig& cfg, int epoch, double epoch_fraction) {
  const double lr = milestone_lr(cfg, epoch);
  if (epoch < cfg.warmup_epochs) {
    return lr * (static_cast<double>(epoch) + epoch_fraction) / cfg.warmup_epochs;
  }
  return lr;
}

SgdOptimizer::SgdOptimizer(SgdConfig cfg, const ParamList<float>& params)
    : cfg_(std::move(cfg)), lr_(cfg_.learning_rate) {
  cfg_.validate();
  velocity_.reserve(params.size());
  for (const auto* p : params) velocity_.emplace_back(p->value.shape());
}

void SgdOptimizer::step(const ParamList<float>& params) {
  if (params.size() != velocity_.size()) throw ShapeError("sgd: parameter list changed");
  for (const auto* p : params) {
    if (!p->has_grad) throw InvalidArgument("sgd: step before gradients computed for " + p->name);
  }
  const float mu = static_cast<float>(cfg_.momentum);
  const float wd = static_cast<float>(cfg_.weight_decay);
  const float lr = static_cast<float>(lr_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    auto& v = velocity_[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      v[j] = mu * v[j] + p.grad[j] + wd * p.value[j];
      p.value[j] -= lr * v[j];
    }
  }
}

AdamOptimizer::AdamOptimizer(AdamConfig cfg, const ParamList<float>& params) : cfg_(cfg) {
  for (const auto* p : params) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void AdamOptimizer::step(const ParamList<float>& params) {
  if (params.size() != m_.size()) throw ShapeError("adam: parameter list changed");
  for (const auto* p : params) {
    if (!p->has_grad) throw InvalidArgument("adam: step before gradients computed for " + p->name);
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const float b1 = static_cast<float>(cfg_.beta1), b2 = static_cast<float>(cfg_.beta2);
  const float step = static_cast<float>(cfg_.learning_rate / bc1);
  const float inv_bc2 = static_cast<float>(1.0 / bc2);
  const float eps = static_cast<float>(cfg_.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const float g = p.grad[j];
      m_[i][j] = b1 * m_[i][j] + (1.0f - b1) * g;
      v_[i][j] = b2 * v_[i][j] + (1.0f - b2) * g * g;
      p.value[j] -= step * m_[i][j] / (std::sqrt(v_[i][j] * inv_bc2) + eps);
    }
  }
}

EmaState make_ema(const ParamList<float>& params, double decay) {
  if (decay < 0 || decay > 1) throw InvalidArgument("ema: decay must be in [0, 1]");
  return EmaState{ParameterSet::snapshot(params), decay};
}

void ema_update(EmaState& ema, const ParamList<float>& params) {
  if (ema.shadow.size() != params.size()) throw ShapeError("ema: parameter count mismatch");
  const float d = static_cast<float>(ema.decay);
  const float keep = 1.0f - d;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, shadow] = ema.shadow[i];
    const auto& src = params[i]->value;
    require_shape(src, shadow.shape(), "ema " + name);
    for (std::size_t j = 0; j < src.size(); ++j) shadow[j] = d * shadow[j] + keep * src[j];
  }
}

double ema_decay_for_length(double length_fraction, long total_steps) {
  if (length_fraction < 0) throw InvalidArgument("ema: length fraction must be >= 0");
  const double window = length_fraction * static_cast<double>(total_steps);
  if (window <= 1.0) return 0.0;
  return 1.0 - 1.0 / window;
}

void zero_grads(const ParamList<float>& params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace auggen::numerics
