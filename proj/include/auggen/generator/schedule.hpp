#pragma once

#include <cstdint>
#include <vector>

namespace auggen::generator {

// Noise levels and preconditioning. Training draws ln(sigma) ~ N(p_mean,
// p_std^2), clamped to [sigma_min, sigma_max], and weights the squared error by
//   lambda(sigma) = (sigma^2 + sigma_data^2) / (sigma * sigma_data)^2.
// The network F sees c_in * x and c_noise, and the denoiser is
//   D(x; sigma) = c_skip * x + c_out * F(c_in * x; c_noise)
// with c_skip = sd^2 / (s^2 + sd^2), c_out = s * sd / sqrt(s^2 + sd^2),
// c_in = 1 / sqrt(s^2 + sd^2), c_noise = ln(s) / 4.
struct NoiseSchedule {
  double sigma_data = 0.5;
  double sigma_min = 0.002;
  double sigma_max = 80.0;
  double p_mean = -1.2;
  double p_std = 1.2;

  void validate() const;
  double loss_weight(double sigma) const;
  double c_skip(double sigma) const;
  double c_out(double sigma) const;
  double c_in(double sigma) const;
  static double c_noise(double sigma);
};

double sample_training_sigma(const NoiseSchedule& schedule, std::uint64_t seed);

// Deterministic Heun sampler. Guidance does not exist in this sampler.
struct SamplerConfig {
  int steps = 18;
  double rho = 7.0;

  void validate() const;
};

// steps + 1 noise levels, decreasing from sigma_max to sigma_min, then 0.
std::vector<double> sampler_sigmas(const SamplerConfig& sampler, const NoiseSchedule& schedule);

}  // namespace auggen::generator
