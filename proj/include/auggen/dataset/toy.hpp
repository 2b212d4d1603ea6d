#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "auggen/dataset/manifest.hpp"

namespace auggen::dataset {

// Per-class sample counts drawn i.i.d. from a truncated power law,
// P(n) proportional to n^-exponent on [min_count, max_count].
struct LongTail {
  int min_count = 2;
  int max_count = 60;
  double exponent = 1.2;
};

// Desk-scale identity generator. Each class is a latent vector that fixes the
// layout of a few oriented strokes; samples of a class differ only by the
// nuisance jitter below.
struct ToyIdentitySpec {
  int num_classes = 16;
  int samples_per_class = 200;
  std::optional<LongTail> long_tail;  // overrides samples_per_class
  int image_size = 32;
  int channels = 1;
  int strokes = 3;  // latent dimension is 5 * strokes
  double rotation_deg = 8.0;
  double translation_px = 1.5;
  double brightness = 0.1;
  double noise_amplitude = 0.04;
  double min_latent_separation = 0.8;  // L2, in latent space
  // Explicit latents (tests); otherwise drawn from the seed.
  std::vector<std::vector<double>> latents;

  int latent_dim() const { return 5 * strokes; }
  void validate() const;
};

// Draws the per-class counts (also used by the synthesizer).
std::vector<int> draw_class_counts(const ToyIdentitySpec& spec, std::uint64_t seed);

// Draws class latents with rejection on min_latent_separation.
std::vector<std::vector<double>> draw_class_latents(const ToyIdentitySpec& spec, std::uint64_t seed);

struct Nuisance {
  double rotation_rad = 0;
  double shift_x = 0, shift_y = 0;
  double brightness = 0;
  std::uint64_t noise_seed = 0;
  double noise_amplitude = 0;
};

// Renders one image of the identity `latent`, quantized to the 8-bit grid.
Tensor render_identity(const ToyIdentitySpec& spec, const std::vector<double>& latent,
                       const Nuisance& nuisance);

Nuisance draw_nuisance(const ToyIdentitySpec& spec, std::uint64_t sample_seed);

// Renders the whole dataset under `out_dir` and writes its manifest there.
// Pure function of (spec, seed): reruns produce byte-identical files.
DatasetManifest synth_toy_dataset(const ToyIdentitySpec& spec, std::uint64_t seed,
                                  const std::filesystem::path& out_dir,
                                  ImageFormat format = ImageFormat::raw);

// Fresh samples of existing identities (same latents, new nuisance stream).
DatasetManifest resample_toy_identities(const ToyIdentitySpec& spec,
                                        const std::vector<std::vector<double>>& latents,
                                        int samples_per_class, std::uint64_t seed,
                                        const std::filesystem::path& out_dir,
                                        ImageFormat format = ImageFormat::raw);

}  // namespace auggen::dataset
