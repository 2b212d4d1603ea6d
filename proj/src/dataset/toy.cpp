#include "auggen/dataset/toy.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "auggen/numerics/rng.hpp"

namespace auggen::dataset {

using numerics::derive_seed;
using numerics::Rng;
using numerics::tag;

void ToyIdentitySpec::validate() const {
  if (num_classes < 2) throw InvalidArgument("toy spec: need at least 2 classes");
  if (!long_tail && samples_per_class < 1) throw InvalidArgument("toy spec: samples per class must be >= 1");
  if (long_tail && (long_tail->min_count < 1 || long_tail->max_count < long_tail->min_count)) {
    throw InvalidArgument("toy spec: long-tail bounds invalid");
  }
  if (image_size < 8 || image_size % 4 != 0) throw InvalidArgument("toy spec: image size must be a multiple of 4, >= 8");
  if (channels != 1 && channels != 3) throw InvalidArgument("toy spec: channels must be 1 or 3");
  if (strokes < 1) throw InvalidArgument("toy spec: need at least one stroke");
  for (double v : {rotation_deg, translation_px, brightness, noise_amplitude, min_latent_separation}) {
    if (!std::isfinite(v) || v < 0) throw InvalidArgument("toy spec: nuisance ranges must be finite and >= 0");
  }
  if (!latents.empty()) {
    if (static_cast<int>(latents.size()) != num_classes) {
      throw InvalidArgument("toy spec: latent count differs from class count");
    }
    for (std::size_t a = 0; a < latents.size(); ++a) {
      if (static_cast<int>(latents[a].size()) != latent_dim()) {
        throw InvalidArgument("toy spec: latent dimension mismatch");
      }
      for (std::size_t b = 0; b < a; ++b) {
        if (latents[a] == latents[b]) {
          throw InvalidArgument("toy spec: classes " + std::to_string(b) + " and " +
                                std::to_string(a) + " have identical latents");
        }
      }
    }
  }
}

std::vector<int> draw_class_counts(const ToyIdentitySpec& spec, std::uint64_t seed) {
  std::vector<int> counts(static_cast<std::size_t>(spec.num_classes), spec.samples_per_class);
  if (!spec.long_tail) return counts;
  const auto& lt = *spec.long_tail;
  std::vector<double> cdf;
  double total = 0;
  for (int n = lt.min_count; n <= lt.max_count; ++n) {
    total += std::pow(static_cast<double>(n), -lt.exponent);
    cdf.push_back(total);
  }
  Rng rng(derive_seed(seed, {tag("class_counts")}));
  for (auto& c : counts) {
    const double u = rng.uniform() * total;
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    c = lt.min_count + static_cast<int>(std::min<std::ptrdiff_t>(it - cdf.begin(),
                                                                 static_cast<std::ptrdiff_t>(cdf.size()) - 1));
  }
  return counts;
}

std::vector<std::vector<double>> draw_class_latents(const ToyIdentitySpec& spec, std::uint64_t seed) {
  if (!spec.latents.empty()) return spec.latents;
  Rng rng(derive_seed(seed, {tag("class_latents")}));
  std::vector<std::vector<double>> latents;
  constexpr int kMaxAttempts = 10000;
  for (int c = 0; c < spec.num_classes; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      std::vector<double> z(static_cast<std::size_t>(spec.latent_dim()));
      for (auto& v : z) v = rng.uniform(-1.0, 1.0);
      placed = true;
      for (const auto& other : latents) {
        double d2 = 0;
        for (std::size_t k = 0; k < z.size(); ++k) d2 += (z[k] - other[k]) * (z[k] - other[k]);
        if (std::sqrt(d2) < spec.min_latent_separation) {
          placed = false;
          break;
        }
      }
      if (placed) latents.push_back(std::move(z));
    }
    if (!placed) {
      throw InvalidArgument("toy spec is degenerate: cannot place " + std::to_string(spec.num_classes) +
                            " identities with latent separation " +
                            std::to_string(spec.min_latent_separation));
    }
  }
  return latents;
}

Nuisance draw_nuisance(const ToyIdentitySpec& spec, std::uint64_t sample_seed) {
  Rng rng(sample_seed);
  Nuisance n;
  n.rotation_rad = rng.uniform(-1.0, 1.0) * spec.rotation_deg * std::numbers::pi / 180.0;
  n.shift_x = rng.uniform(-1.0, 1.0) * spec.translation_px;
  n.shift_y = rng.uniform(-1.0, 1.0) * spec.translation_px;
  n.brightness = rng.uniform(-1.0, 1.0) * spec.brightness;
  n.noise_seed = derive_seed(sample_seed, {tag("pixel_noise")});
  n.noise_amplitude = spec.noise_amplitude;
  return n;
}

Tensor render_identity(const ToyIdentitySpec& spec, const std::vector<double>& latent,
                       const Nuisance& nuisance) {
  if (static_cast<int>(latent.size()) != spec.latent_dim()) {
    throw ShapeError("render_identity: latent dimension mismatch");
  }
  const auto s = static_cast<std::size_t>(spec.image_size);
  const auto ch = static_cast<std::size_t>(spec.channels);
  const double size = spec.image_size;
  const double center = 0.5 * (size - 1.0);
  const double cr = std::cos(nuisance.rotation_rad), sr = std::sin(nuisance.rotation_rad);

  struct Stroke {
    double x, y, cos_a, sin_a, inv_long2, inv_short2, amplitude;
  };
  std::vector<Stroke> strokes;
  for (int j = 0; j < spec.strokes; ++j) {
    const double* z = latent.data() + 5 * j;
    const double angle = std::numbers::pi * z[2];
    const double sigma_long = 1.5 + 2.5 * 0.5 * (z[3] + 1.0);
    const double sigma_short = 0.9 + 0.5 * 0.5 * (z[3] + 1.0);
    strokes.push_back({center + 0.3 * size * z[0], center + 0.3 * size * z[1], std::cos(angle),
                       std::sin(angle), 1.0 / (2 * sigma_long * sigma_long),
                       1.0 / (2 * sigma_short * sigma_short), 0.9 + 0.6 * 0.5 * (z[4] + 1.0)});
  }

  Rng noise(nuisance.noise_seed);
  Tensor image({ch, s, s});
  for (std::size_t y = 0; y < s; ++y) {
    for (std::size_t x = 0; x < s; ++x) {
      // Map the output pixel back into identity coordinates.
      const double px = static_cast<double>(x) - center - nuisance.shift_x;
      const double py = static_cast<double>(y) - center - nuisance.shift_y;
      const double ix = cr * px + sr * py + center;
      const double iy = -sr * px + cr * py + center;
      double v = -0.9 + nuisance.brightness;
      for (const auto& st : strokes) {
        const double dx = ix - st.x, dy = iy - st.y;
        const double u = st.cos_a * dx + st.sin_a * dy;
        const double w = -st.sin_a * dx + st.cos_a * dy;
        v += st.amplitude * std::exp(-(u * u * st.inv_long2 + w * w * st.inv_short2));
      }
      for (std::size_t c = 0; c < ch; ++c) {
        // Colour channels get a fixed per-channel gain so RGB stays identity-bound.
        const double gain = ch == 1 ? 1.0 : 0.8 + 0.1 * static_cast<double>(c);
        const double value = (v + 0.9) * gain - 0.9 + nuisance.noise_amplitude * noise.normal();
        image[(c * s + y) * s + x] = static_cast<float>(std::clamp(value, -1.0, 1.0));
      }
    }
  }
  quantize_to_8bit(image);
  return image;
}

namespace {

std::string image_rel_path(int class_id, std::uint64_t sample_id, ImageFormat format) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "images/c%04d/%010llu", class_id,
                static_cast<unsigned long long>(sample_id));
  return std::string(buf) + std::string(file_extension(format));
}

DatasetManifest render_all(const ToyIdentitySpec& spec, const std::vector<std::vector<double>>& latents,
                           const std::vector<int>& counts, std::uint64_t seed, std::uint64_t id_base,
                           const std::filesystem::path& out_dir, ImageFormat format) {
  DatasetManifest m;
  m.root = std::filesystem::absolute(out_dir).lexically_normal();
  m.class_count = static_cast<int>(latents.size());
  m.source_seed = seed;
  m.class_latents = latents;
  std::uint64_t next_id = id_base;
  for (int c = 0; c < m.class_count; ++c) {
    for (int k = 0; k < counts[static_cast<std::size_t>(c)]; ++k) {
      const auto sample_seed = derive_seed(seed, {tag("sample"), static_cast<std::uint64_t>(c),
                                                  static_cast<std::uint64_t>(k)});
      const Tensor img = render_identity(spec, latents[static_cast<std::size_t>(c)],
                                         draw_nuisance(spec, sample_seed));
      ManifestRecord r;
      r.sample_id = next_id++;
      r.class_id = c;
      r.provenance = Provenance::orig;
      r.path = image_rel_path(c, r.sample_id, format);
      write_image(m.root / r.path, img, format);
      m.records.push_back(std::move(r));
    }
  }
  save_manifest(m, m.root / kManifestFileName);
  return m;
}

}  // namespace

DatasetManifest synth_toy_dataset(const ToyIdentitySpec& spec, std::uint64_t seed,
                                  const std::filesystem::path& out_dir, ImageFormat format) {
  spec.validate();
  const auto latents = draw_class_latents(spec, seed);
  const auto counts = draw_class_counts(spec, seed);
  return render_all(spec, latents, counts, seed, 0, out_dir, format);
}

DatasetManifest resample_toy_identities(const ToyIdentitySpec& spec,
                                        const std::vector<std::vector<double>>& latents,
                                        int samples_per_class, std::uint64_t seed,
                                        const std::filesystem::path& out_dir, ImageFormat format) {
  if (samples_per_class < 1) throw InvalidArgument("samples per class must be >= 1");
  const std::vector<int> counts(latents.size(), samples_per_class);
  return render_all(spec, latents, counts, derive_seed(seed, {tag("resample")}), std::uint64_t{1} << 40,
                    out_dir, format);
}

}  // namespace auggen::dataset
