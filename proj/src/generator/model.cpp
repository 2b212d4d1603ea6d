#include "auggen/generator/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>

#include <json.hpp>

#include "auggen/dataset/image_io.hpp"
#include "auggen/numerics/checkpoint.hpp"
#include "auggen/numerics/rng.hpp"

namespace auggen::generator {

using numerics::derive_seed;
using numerics::ParameterSet;
using numerics::Rng;
using numerics::Shape;
using numerics::shape_volume;
using numerics::tag;

void GeneratorConfig::validate() const {
  net.validate();
  noise.validate();
  sampler.validate();
  if (train_steps < 0) throw InvalidArgument("generator: train_steps must be >= 0");
  if (batch_size < 1) throw InvalidArgument("generator: batch_size must be >= 1");
  if (warmup_steps < 0) throw InvalidArgument("generator: warmup_steps must be >= 0");
  if (!(ema_length >= 0)) throw InvalidArgument("generator: ema_length must be >= 0");
  if (validation_samples < 1) throw InvalidArgument("generator: validation_samples must be >= 1");
  if (log_every < 1) throw InvalidArgument("generator: log_every must be >= 1");
  if (!(adam.learning_rate > 0) || !std::isfinite(adam.learning_rate)) {
    throw InvalidArgument("generator: learning rate must be > 0");
  }
}

void GeneratorCurve::write_csv(const std::filesystem::path& file) const {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  out << std::setprecision(9) << "step,learning_rate,loss\n";
  for (const auto& p : points) out << p.step << ',' << p.learning_rate << ',' << p.loss << '\n';
}

DenoiserModel::DenoiserModel(const GeneratorConfig& cfg, int class_count, std::uint64_t seed) : cfg_(cfg) {
  cfg_.net.class_count = class_count;
  cfg_.validate();
  Rng rng(derive_seed(seed, {tag("generator_init")}));
  net_ = UNet<float>(cfg_.net, rng);
  ema_net_ = net_;
  ema_ = numerics::make_ema(net_.parameters(), numerics::ema_decay_for_length(cfg_.ema_length, cfg_.train_steps));
  ema_dirty_ = false;
}

Tensor DenoiserModel::denoise(const Tensor& x, std::span<const float> sigmas, const Tensor& cond, bool use_ema) {
  const std::size_t b = x.dim(0);
  if (sigmas.size() != b) throw ShapeError("denoise: one sigma per row required");
  numerics::require_shape(cond, {b, static_cast<std::size_t>(class_count())}, "denoise condition");
  UNet<float>* net = &net_;
  if (use_ema) {
    if (ema_dirty_) {
      ema_.shadow.load_into(ema_net_.parameters());
      ema_dirty_ = false;
    }
    net = &ema_net_;
  }
  const auto& ns = cfg_.noise;
  Tensor scaled = x;
  std::vector<float> c_noise(b);
  const std::size_t stride = x.size() / b;
  for (std::size_t i = 0; i < b; ++i) {
    const double s = sigmas[i];
    const auto cin = static_cast<float>(ns.c_in(s));
    for (auto& v : scaled.slice(i)) v *= cin;
    c_noise[i] = static_cast<float>(NoiseSchedule::c_noise(s));
  }
  Tensor f = net->forward(scaled, c_noise, cond);
  ++evaluations;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < b; ++i) {
    const double s = sigmas[i];
    const auto skip = static_cast<float>(ns.c_skip(s));
    const auto cout = static_cast<float>(ns.c_out(s));
    for (std::size_t j = i * stride; j < (i + 1) * stride; ++j) out[j] = skip * x[j] + cout * f[j];
  }
  return out;
}

Tensor draw_noise(const Shape& shape, double sigma, std::uint64_t noise_seed) {
  Rng rng(noise_seed);
  Tensor n(shape);
  for (auto& v : n.values()) v = static_cast<float>(sigma * rng.normal());
  return n;
}

double denoise_loss(const DenoiseFn& denoiser, const Tensor& clean, const Tensor& conditions, double sigma,
                    std::uint64_t noise_seed) {
  const std::size_t b = clean.dim(0);
  Tensor noisy = clean;
  add_inplace(noisy, draw_noise(clean.shape(), sigma, noise_seed));
  const std::vector<float> sigmas(b, static_cast<float>(sigma));
  const Tensor d = denoiser(noisy, sigmas, conditions);
  numerics::require_shape(d, clean.shape(), "denoise_loss");
  double total = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double e = static_cast<double>(d[i]) - clean[i];
    total += e * e;
  }
  return total / static_cast<double>(b);
}

namespace {

Tensor condition_batch(const std::vector<int>& labels, int class_count) {
  Tensor c({labels.size(), static_cast<std::size_t>(class_count)});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    c[i * static_cast<std::size_t>(class_count) + static_cast<std::size_t>(labels[i])] = 1.0f;
  }
  return c;
}

Tensor stack(const std::vector<Tensor>& images, const std::vector<std::size_t>& rows) {
  const Shape& s = images[rows.front()].shape();
  Tensor out({rows.size(), s[0], s[1], s[2]});
  const std::size_t stride = shape_volume(s);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(images[rows[i]].values().begin(), images[rows[i]].values().end(), out.data() + i * stride);
  }
  return out;
}

struct WeightedBatch {
  double loss = 0;   // per-pixel mean of lambda * (D - y)^2
  Tensor d_output;   // d loss / d F
};

// lambda-weighted error for a batch with per-row sigma; optionally prepares
// the gradient w.r.t. the network output.
WeightedBatch weighted_loss(DenoiserModel& model, const Tensor& clean, const Tensor& cond,
                            const std::vector<float>& sigmas, const Tensor& noise, bool use_ema, bool want_grad) {
  const auto& ns = model.config().noise;
  Tensor noisy = clean;
  add_inplace(noisy, noise);
  const Tensor d = model.denoise(noisy, sigmas, cond, use_ema);
  const std::size_t b = clean.dim(0), stride = clean.size() / b;
  const double norm = 1.0 / static_cast<double>(clean.size());
  WeightedBatch r;
  if (want_grad) r.d_output = Tensor(clean.shape());
  double total = 0;
  for (std::size_t i = 0; i < b; ++i) {
    const double lam = ns.loss_weight(sigmas[i]);
    const double g = 2.0 * lam * ns.c_out(sigmas[i]) * norm;
    for (std::size_t j = i * stride; j < (i + 1) * stride; ++j) {
      const double e = static_cast<double>(d[j]) - clean[j];
      total += lam * e * e;
      if (want_grad) r.d_output[j] = static_cast<float>(g * e);
    }
  }
  r.loss = total * norm;
  if (!std::isfinite(r.loss)) throw NumericalError("generator loss", "non-finite loss");
  return r;
}

void check_images(const dataset::LabeledImages& data, const UNetConfig& net) {
  const Shape want{static_cast<std::size_t>(net.channels), static_cast<std::size_t>(net.image_size),
                   static_cast<std::size_t>(net.image_size)};
  for (const auto& img : data.images) {
    if (img.shape() != want) {
      throw InvalidArgument("generator: image shape " + numerics::shape_string(img.shape()) + " does not match " +
                            numerics::shape_string(want));
    }
  }
}

}  // namespace

double validation_loss(DenoiserModel& model, const dataset::LabeledImages& data, std::uint64_t seed, bool use_ema) {
  if (data.size() == 0) throw InvalidArgument("validation_loss: empty data");
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng pick(derive_seed(seed, {tag("val_subset")}));
  std::shuffle(order.begin(), order.end(), pick.engine());
  order.resize(std::min(order.size(), static_cast<std::size_t>(model.config().validation_samples)));

  const std::size_t chunk = 64;
  double total = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += chunk) {
    const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                        order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), begin + chunk)));
    const Tensor clean = stack(data.images, rows);
    std::vector<int> labels;
    std::vector<float> sigmas;
    Tensor noise(clean.shape());
    const std::size_t stride = clean.size() / rows.size();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      labels.push_back(data.labels[rows[i]]);
      const auto k = static_cast<std::uint64_t>(begin + i);
      const double s = sample_training_sigma(model.config().noise, derive_seed(seed, {tag("val_sigma"), k}));
      sigmas.push_back(static_cast<float>(s));
      const Tensor n = draw_noise({stride}, s, derive_seed(seed, {tag("val_noise"), k}));
      std::copy(n.values().begin(), n.values().end(), noise.data() + i * stride);
    }
    const auto r = weighted_loss(model, clean, condition_batch(labels, model.class_count()), sigmas, noise, use_ema,
                                 false);
    total += r.loss * static_cast<double>(rows.size());
  }
  return total / static_cast<double>(order.size());
}

DenoiserModel train_generator(const dataset::LabeledImages& data, int class_count, const GeneratorConfig& cfg,
                              std::uint64_t seed, const StepCallback& on_log,
                              const std::optional<std::filesystem::path>& failure_checkpoint) {
  if (data.size() == 0) throw InvalidArgument("train_generator: empty training set");
  if (class_count < 1) throw InvalidArgument("train_generator: need at least 1 class");
  for (int y : data.labels) {
    if (y < 0 || y >= class_count) throw InvalidArgument("train_generator: label " + std::to_string(y) + " out of range");
  }
  DenoiserModel model(cfg, class_count, seed);
  check_images(data, model.config().net);
  const auto& gc = model.config();
  const std::uint64_t val_seed = derive_seed(seed, {tag("validation")});
  model.curve.initial_validation_loss = validation_loss(model, data, val_seed, false);

  const auto params = model.net().parameters();
  numerics::AdamOptimizer opt(gc.adam, params);
  numerics::zero_grads(params);
  ParameterSet last_good = ParameterSet::snapshot(params);
  ParameterSet last_good_ema = model.ema().shadow;
  long last_good_step = 0;

  const auto bs = static_cast<std::size_t>(gc.batch_size);
  const std::size_t stride = shape_volume(data.images.front().shape());
  double window_loss = 0;
  long window_steps = 0;
  for (long step = 0; step < gc.train_steps; ++step) {
    const auto st = static_cast<std::uint64_t>(step);
    Rng pick(derive_seed(seed, {tag("batch"), st}));
    std::vector<std::size_t> rows(bs);
    std::vector<int> labels(bs);
    for (std::size_t i = 0; i < bs; ++i) {
      rows[i] = pick.index(data.size());
      labels[i] = data.labels[rows[i]];
    }
    const Tensor clean = stack(data.images, rows);
    std::vector<float> sigmas(bs);
    Tensor noise(clean.shape());
    for (std::size_t i = 0; i < bs; ++i) {
      const double s = sample_training_sigma(gc.noise, derive_seed(seed, {tag("sigma"), st, i}));
      sigmas[i] = static_cast<float>(s);
      const Tensor n = draw_noise({stride}, s, derive_seed(seed, {tag("noise"), st, i}));
      std::copy(n.values().begin(), n.values().end(), noise.data() + i * stride);
    }
    const double ramp = gc.warmup_steps > 0 ? std::min(1.0, static_cast<double>(step + 1) / gc.warmup_steps) : 1.0;
    const double lr = gc.adam.learning_rate * ramp;
    try {
      const auto r = weighted_loss(model, clean, condition_batch(labels, class_count), sigmas, noise, false, true);
      model.net().backward(r.d_output);
      for (const auto* p : params) numerics::require_finite(p->grad, "gradient " + p->name);
      opt.set_learning_rate(lr);
      opt.step(params);
      numerics::zero_grads(params);
      numerics::ema_update(model.ema(), params);
      model.mark_ema_dirty();
      window_loss += r.loss;
      ++window_steps;
    } catch (const NumericalError& e) {
      if (failure_checkpoint) {
        last_good.load_into(params);
        model.ema().shadow = last_good_ema;
        model.mark_ema_dirty();
        model.steps = last_good_step;
        model.images_seen = last_good_step * gc.batch_size;
        save_generator(model, *failure_checkpoint);
      }
      throw NumericalError("train_generator", "diverged at step " + std::to_string(step) + " (lr " +
                                                  std::to_string(lr) + "): " + e.what());
    }
    ++model.steps;
    model.images_seen += static_cast<long>(bs);
    if ((step + 1) % gc.log_every == 0 || step + 1 == gc.train_steps) {
      GeneratorCurvePoint pt{step + 1, lr, window_loss / static_cast<double>(window_steps)};
      model.curve.points.push_back(pt);
      if (on_log) on_log(pt);
      window_loss = 0;
      window_steps = 0;
      last_good = ParameterSet::snapshot(params);
      last_good_ema = model.ema().shadow;
      last_good_step = model.steps;
    }
  }
  model.curve.final_validation_loss = validation_loss(model, data, val_seed, true);
  return model;
}

DenoiserModel train_generator(const dataset::DatasetManifest& train, const GeneratorConfig& cfg, std::uint64_t seed,
                              const StepCallback& on_log,
                              const std::optional<std::filesystem::path>& failure_checkpoint) {
  return train_generator(dataset::load_images(train), train.class_count, cfg, seed, on_log, failure_checkpoint);
}

std::uint64_t latent_seed(std::uint64_t seed, int index) {
  return derive_seed(seed, {tag("latent"), static_cast<std::uint64_t>(index)});
}

Tensor initial_latent(const UNetConfig& net, const NoiseSchedule& noise, std::uint64_t seed) {
  const auto s = static_cast<std::size_t>(net.image_size);
  return draw_noise({static_cast<std::size_t>(net.channels), s, s}, noise.sigma_max, seed);
}

std::vector<Tensor> generate(DenoiserModel& model, const std::vector<ConditionVector>& conditions,
                             const std::vector<std::uint64_t>& latent_seeds, std::size_t batch) {
  if (conditions.size() != latent_seeds.size()) throw InvalidArgument("generate: one latent seed per condition");
  if (batch == 0) throw InvalidArgument("generate: batch must be >= 1");
  const auto& gc = model.config();
  const auto classes = static_cast<std::size_t>(model.class_count());
  for (const auto& c : conditions) {
    if (c.size() != classes) {
      throw InvalidArgument("generate: condition length " + std::to_string(c.size()) + " != class count " +
                            std::to_string(classes));
    }
  }
  const auto t = sampler_sigmas(gc.sampler, gc.noise);
  const auto s = static_cast<std::size_t>(gc.net.image_size);
  const auto ch = static_cast<std::size_t>(gc.net.channels);
  std::vector<Tensor> out;
  out.reserve(conditions.size());
  for (std::size_t begin = 0; begin < conditions.size(); begin += batch) {
    const std::size_t n = std::min(batch, conditions.size() - begin);
    Tensor cond({n, classes});
    Tensor x({n, ch, s, s});
    const std::size_t stride = ch * s * s;
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(conditions[begin + i].values.begin(), conditions[begin + i].values.end(), cond.data() + i * classes);
      const Tensor z = initial_latent(gc.net, gc.noise, latent_seeds[begin + i]);
      std::copy(z.values().begin(), z.values().end(), x.data() + i * stride);
    }
    for (std::size_t i = 0; i + 1 < t.size(); ++i) {
      const double cur = t[i], next = t[i + 1];
      const std::vector<float> sc(n, static_cast<float>(cur));
      const Tensor d0 = model.denoise(x, sc, cond, true);
      Tensor slope(x.shape());
      Tensor x_next(x.shape());
      for (std::size_t j = 0; j < x.size(); ++j) {
        slope[j] = static_cast<float>((static_cast<double>(x[j]) - d0[j]) / cur);
        x_next[j] = static_cast<float>(x[j] + (next - cur) * slope[j]);
      }
      if (next > 0) {
        const std::vector<float> sn(n, static_cast<float>(next));
        const Tensor d1 = model.denoise(x_next, sn, cond, true);
        for (std::size_t j = 0; j < x.size(); ++j) {
          const double slope2 = (static_cast<double>(x_next[j]) - d1[j]) / next;
          x_next[j] = static_cast<float>(x[j] + (next - cur) * 0.5 * (slope[j] + slope2));
        }
      }
      x = std::move(x_next);
    }
    numerics::require_finite(x, "generate");
    for (std::size_t i = 0; i < n; ++i) {
      Tensor img({ch, s, s});
      const auto row = x.slice(i);
      for (std::size_t j = 0; j < stride; ++j) img[j] = std::clamp(row[j], -1.0f, 1.0f);
      out.push_back(std::move(img));
    }
  }
  return out;
}

std::vector<Tensor> generate(DenoiserModel& model, const ConditionVector& condition, int count, std::uint64_t seed) {
  if (count < 0) throw InvalidArgument("generate: count must be >= 0");
  std::vector<ConditionVector> conds(static_cast<std::size_t>(count), condition);
  std::vector<std::uint64_t> seeds;
  for (int k = 0; k < count; ++k) seeds.push_back(latent_seed(seed, k));
  return generate(model, conds, seeds);
}

namespace {

std::string sample_path(const char* dir, int class_id, std::uint64_t id, dataset::ImageFormat format) {
  char buf[80];
  std::snprintf(buf, sizeof(buf), "%s/c%04d/%014llu", dir, class_id, static_cast<unsigned long long>(id));
  return std::string(buf) + std::string(dataset::file_extension(format));
}

}  // namespace

dataset::DatasetManifest generate_repro(DenoiserModel& model, const std::vector<int>& class_ids, int n_per_class,
                                        std::uint64_t seed, const std::filesystem::path& out_dir,
                                        dataset::ImageFormat format) {
  if (n_per_class < 0) throw InvalidArgument("generate_repro: n_per_class must be >= 0");
  std::vector<ConditionVector> conds;
  std::vector<std::uint64_t> seeds;
  for (int c : class_ids) {
    if (c < 0 || c >= model.class_count()) throw InvalidArgument("generate_repro: class " + std::to_string(c) + " out of range");
    for (int k = 0; k < n_per_class; ++k) {
      conds.push_back(one_hot(model.class_count(), c));
      seeds.push_back(latent_seed(seed, k));
    }
  }
  const auto images = generate(model, conds, seeds);
  dataset::DatasetManifest m;
  m.root = out_dir;
  m.class_count = model.class_count();
  m.source_seed = seed;
  if (model.steps == 0) m.notes.push_back("generator untrained");
  std::uint64_t id = kReproIdBase;
  std::size_t i = 0;
  for (int c : class_ids) {
    for (int k = 0; k < n_per_class; ++k, ++i, ++id) {
      dataset::ManifestRecord r;
      r.sample_id = id;
      r.class_id = c;
      r.provenance = dataset::Provenance::repro;
      r.path = sample_path("repro", c, id, format);
      dataset::write_image(m.root / r.path, images[i], format);
      m.records.push_back(std::move(r));
    }
  }
  dataset::save_manifest(m, out_dir / dataset::kManifestFileName);
  return m;
}

void save_generator(DenoiserModel& model, const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  ParameterSet set;
  for (const auto* p : model.net().parameters()) set.add("raw." + p->name, p->value);
  for (const auto& [name, t] : model.ema().shadow) set.add("ema." + name, t);
  numerics::save_checkpoint(file, set);

  const auto& c = model.config();
  nlohmann::json j;
  j["class_count"] = model.class_count();
  j["cond_dim"] = c.net.emb_dim;
  j["net"] = {{"image_size", c.net.image_size}, {"channels", c.net.channels}, {"base_channels", c.net.base_channels},
              {"emb_dim", c.net.emb_dim}, {"fourier_dim", c.net.fourier_dim}, {"groups", c.net.groups}};
  j["noise"] = {{"sigma_data", c.noise.sigma_data}, {"sigma_min", c.noise.sigma_min},
                {"sigma_max", c.noise.sigma_max}, {"p_mean", c.noise.p_mean}, {"p_std", c.noise.p_std}};
  j["sampler"] = {{"steps", c.sampler.steps}, {"rho", c.sampler.rho}};
  j["adam"] = {{"learning_rate", c.adam.learning_rate}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2},
               {"epsilon", c.adam.epsilon}};
  j["train_steps"] = c.train_steps;
  j["batch_size"] = c.batch_size;
  j["warmup_steps"] = c.warmup_steps;
  j["ema_length"] = c.ema_length;
  j["ema_decay"] = model.ema().decay;
  j["validation_samples"] = c.validation_samples;
  j["log_every"] = c.log_every;
  j["steps"] = model.steps;
  j["images_seen"] = model.images_seen;
  j["curve"] = {{"initial_validation_loss", model.curve.initial_validation_loss},
                {"final_validation_loss", model.curve.final_validation_loss}};
  std::ofstream out(file.string() + ".json");
  if (!out) throw Error("cannot write " + file.string() + ".json");
  out << j.dump(2) << '\n';
}

DenoiserModel load_generator(const std::filesystem::path& file) {
  std::ifstream in(file.string() + ".json");
  if (!in) throw FormatError("missing generator metadata " + file.string() + ".json");
  try {
    nlohmann::json j;
    in >> j;
    GeneratorConfig c;
    const auto& n = j.at("net");
    c.net = {n.at("image_size"), n.at("channels"), n.at("base_channels"), n.at("emb_dim"), n.at("fourier_dim"),
             n.at("groups"), j.at("class_count")};
    const auto& z = j.at("noise");
    c.noise = {z.at("sigma_data"), z.at("sigma_min"), z.at("sigma_max"), z.at("p_mean"), z.at("p_std")};
    c.sampler = {j.at("sampler").at("steps"), j.at("sampler").at("rho")};
    const auto& a = j.at("adam");
    c.adam = {a.at("learning_rate"), a.at("beta1"), a.at("beta2"), a.at("epsilon")};
    c.train_steps = j.at("train_steps");
    c.batch_size = j.at("batch_size");
    c.warmup_steps = j.at("warmup_steps");
    c.ema_length = j.at("ema_length");
    c.validation_samples = j.at("validation_samples");
    c.log_every = j.at("log_every");
    DenoiserModel model(c, j.at("class_count"), 0);
    const ParameterSet set = numerics::load_checkpoint(file);
    const auto params = model.net().parameters();
    ParameterSet raw, ema;
    for (const auto* p : params) {
      raw.add(p->name, set.at("raw." + p->name));
      ema.add(p->name, set.at("ema." + p->name));
    }
    if (set.size() != 2 * params.size()) throw FormatError("generator checkpoint has unexpected entries");
    raw.load_into(params);
    model.ema().shadow = std::move(ema);
    model.ema().decay = j.at("ema_decay");
    model.mark_ema_dirty();
    model.steps = j.at("steps");
    model.images_seen = j.at("images_seen");
    model.curve.initial_validation_loss = j.at("curve").at("initial_validation_loss");
    model.curve.final_validation_loss = j.at("curve").at("final_validation_loss");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad generator metadata " + file.string() + ".json: " + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError("bad generator checkpoint " + file.string() + ": " + e.what());
  }
}

}  // namespace auggen::generator
