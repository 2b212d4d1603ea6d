#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "auggen/dataset/manifest.hpp"
#include "auggen/generator/condition.hpp"
#include "auggen/generator/schedule.hpp"
#include "auggen/generator/unet.hpp"
#include "auggen/numerics/optimizer.hpp"

namespace auggen::generator {

using numerics::Tensor;

struct GeneratorConfig {
  UNetConfig net;  // class_count is taken from the training data
  NoiseSchedule noise;
  SamplerConfig sampler;
  numerics::AdamConfig adam;  // lr 1e-3
  long train_steps = 3000;
  int batch_size = 32;
  long warmup_steps = 100;  // linear learning-rate ramp
  double ema_length = 0.1;  // EMA window as a fraction of train_steps
  int validation_samples = 128;
  int log_every = 100;

  void validate() const;
};

struct GeneratorCurvePoint {
  long step = 0;
  double learning_rate = 0;
  double loss = 0;  // mean weighted loss since the previous point
};

struct GeneratorCurve {
  double initial_validation_loss = 0;
  double final_validation_loss = 0;  // EMA weights
  std::vector<GeneratorCurvePoint> points;

  void write_csv(const std::filesystem::path& file) const;
};

// D(x; sigma, c) with raw and EMA weights. Sampling reads the EMA shadow.
class DenoiserModel {
 public:
  DenoiserModel() = default;
  DenoiserModel(const GeneratorConfig& cfg, int class_count, std::uint64_t seed);

  const GeneratorConfig& config() const { return cfg_; }
  int class_count() const { return cfg_.net.class_count; }

  // x: [B, C, S, S]; sigmas: one per row; cond: [B, class_count].
  Tensor denoise(const Tensor& x, std::span<const float> sigmas, const Tensor& cond, bool use_ema);

  UNet<float>& net() { return net_; }
  numerics::EmaState& ema() { return ema_; }
  const numerics::EmaState& ema() const { return ema_; }
  // Call after the raw weights or the shadow change.
  void mark_ema_dirty() { ema_dirty_ = true; }

  long steps = 0;
  long images_seen = 0;
  GeneratorCurve curve;
  // Network evaluations made by denoise since construction.
  long evaluations = 0;

 private:
  GeneratorConfig cfg_;
  UNet<float> net_;
  UNet<float> ema_net_;
  numerics::EmaState ema_;
  bool ema_dirty_ = true;
};

// Any denoiser D(x; sigma, c); lets tests plug in analytic stubs.
using DenoiseFn = std::function<Tensor(const Tensor& noisy, std::span<const float> sigmas, const Tensor& cond)>;

// N ~ N(0, sigma^2 I) with the given shape, drawn from noise_seed.
Tensor draw_noise(const numerics::Shape& shape, double sigma, std::uint64_t noise_seed);

// Unweighted per-noise-level objective: mean over the batch of
// ||D(X + N; sigma, c) - X||^2, the squared norm summed over all pixels.
double denoise_loss(const DenoiseFn& denoiser, const Tensor& clean, const Tensor& conditions, double sigma,
                    std::uint64_t noise_seed);

// Mean lambda-weighted loss over a fixed subset of `data` with noise levels
// and noise drawn from `seed`.
double validation_loss(DenoiserModel& model, const dataset::LabeledImages& data, std::uint64_t seed, bool use_ema);

using StepCallback = std::function<void(const GeneratorCurvePoint&)>;

// Minimizes E_sigma[lambda(sigma) ||D(X + N; sigma, c(y)) - X||^2] with Adam
// and maintains the EMA shadow. On divergence the last good weights are
// written to `failure_checkpoint` (when given) before NumericalError is thrown.
DenoiserModel train_generator(const dataset::LabeledImages& data, int class_count, const GeneratorConfig& cfg,
                              std::uint64_t seed, const StepCallback& on_log = {},
                              const std::optional<std::filesystem::path>& failure_checkpoint = {});
DenoiserModel train_generator(const dataset::DatasetManifest& train, const GeneratorConfig& cfg, std::uint64_t seed,
                              const StepCallback& on_log = {},
                              const std::optional<std::filesystem::path>& failure_checkpoint = {});

// Z ~ N(0, sigma_max^2 I) for one sample.
Tensor initial_latent(const UNetConfig& net, const NoiseSchedule& noise, std::uint64_t latent_seed);

// Deterministic Heun ODE sampling, one image per (condition, latent seed),
// clamped to [-1, 1]. Rows are processed in chunks of `batch`.
std::vector<Tensor> generate(DenoiserModel& model, const std::vector<ConditionVector>& conditions,
                             const std::vector<std::uint64_t>& latent_seeds, std::size_t batch = 32);
// `count` images of one condition; sample k uses latent seed derive_seed(seed, {k}).
std::vector<Tensor> generate(DenoiserModel& model, const ConditionVector& condition, int count, std::uint64_t seed);
std::uint64_t latent_seed(std::uint64_t seed, int index);

// D^repro: n_per_class one-hot samples per listed class, class ids kept.
inline constexpr std::uint64_t kReproIdBase = std::uint64_t{2} << 40;
dataset::DatasetManifest generate_repro(DenoiserModel& model, const std::vector<int>& class_ids, int n_per_class,
                                        std::uint64_t seed, const std::filesystem::path& out_dir,
                                        dataset::ImageFormat format = dataset::ImageFormat::raw);

// Raw and EMA weights to `file`; configuration and counters to `file` + ".json".
void save_generator(DenoiserModel& model, const std::filesystem::path& file);
DenoiserModel load_generator(const std::filesystem::path& file);

}  // namespace auggen::generator
