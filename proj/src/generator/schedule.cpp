#include "auggen/generator/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "auggen/error.hpp"
#include "auggen/numerics/rng.hpp"

namespace auggen::generator {

void NoiseSchedule::validate() const {
  if (!(sigma_data > 0)) throw InvalidArgument("noise schedule: sigma_data must be > 0");
  if (!(sigma_min > 0 && sigma_min < sigma_max) || !std::isfinite(sigma_max)) {
    throw InvalidArgument("noise schedule: need 0 < sigma_min < sigma_max");
  }
  if (!std::isfinite(p_mean) || !(p_std >= 0) || !std::isfinite(p_std)) {
    throw InvalidArgument("noise schedule: p_mean/p_std must be finite, p_std >= 0");
  }
}

double NoiseSchedule::loss_weight(double s) const {
  return (s * s + sigma_data * sigma_data) / ((s * sigma_data) * (s * sigma_data));
}
double NoiseSchedule::c_skip(double s) const {
  return sigma_data * sigma_data / (s * s + sigma_data * sigma_data);
}
double NoiseSchedule::c_out(double s) const { return s * sigma_data / std::sqrt(s * s + sigma_data * sigma_data); }
double NoiseSchedule::c_in(double s) const { return 1.0 / std::sqrt(s * s + sigma_data * sigma_data); }
double NoiseSchedule::c_noise(double s) { return std::log(s) / 4.0; }

double sample_training_sigma(const NoiseSchedule& schedule, std::uint64_t seed) {
  numerics::Rng rng(seed);
  const double s = std::exp(schedule.p_mean + schedule.p_std * rng.normal());
  return std::clamp(s, schedule.sigma_min, schedule.sigma_max);
}

void SamplerConfig::validate() const {
  if (steps < 1) throw InvalidArgument("sampler: steps must be >= 1");
  if (!(rho > 0) || !std::isfinite(rho)) throw InvalidArgument("sampler: rho must be > 0");
}

std::vector<double> sampler_sigmas(const SamplerConfig& sampler, const NoiseSchedule& schedule) {
  sampler.validate();
  std::vector<double> t;
  const double a = std::pow(schedule.sigma_max, 1.0 / sampler.rho);
  const double b = std::pow(schedule.sigma_min, 1.0 / sampler.rho);
  for (int i = 0; i < sampler.steps; ++i) {
    const double frac = sampler.steps == 1 ? 0.0 : static_cast<double>(i) / (sampler.steps - 1);
    t.push_back(std::pow(a + frac * (b - a), sampler.rho));
  }
  t.push_back(0.0);
  return t;
}

}  // namespace auggen::generator
