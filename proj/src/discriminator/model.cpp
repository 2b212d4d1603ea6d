#include "auggen/discriminator/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

#include <json.hpp>

#include "auggen/numerics/checkpoint.hpp"
#include "auggen/numerics/rng.hpp"

namespace auggen::discriminator {

using numerics::derive_seed;
using numerics::ParamList;
using numerics::require_shape;
using numerics::Shape;
using numerics::shape_volume;
using numerics::Rng;
using numerics::tag;

void BackboneConfig::validate() const {
  if (image_size < 8 || image_size % 8 != 0) throw InvalidArgument("backbone: image size must be a multiple of 8");
  if (channels != 1 && channels != 3) throw InvalidArgument("backbone: channels must be 1 or 3");
  if (width < 4 || width % 4 != 0) throw InvalidArgument("backbone: width must be a positive multiple of 4");
  if (embedding_dim < 2) throw InvalidArgument("backbone: embedding dim must be >= 2");
}

void TrainSchedule::validate() const {
  if (epochs < 0) throw InvalidArgument("schedule: epochs must be >= 0");
  if (batch_size < 1) throw InvalidArgument("schedule: batch size must be >= 1");
  if (grad_accum_steps < 1) throw InvalidArgument("schedule: gradient accumulation steps must be >= 1");
  if (!(brightness >= 0) || crop_padding < 0) throw InvalidArgument("schedule: augmentation ranges must be >= 0");
  sgd.validate();
}

void TrainingCurve::write_csv(const std::filesystem::path& file) const {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  out << std::setprecision(9) << "epoch,learning_rate,loss,accuracy\n";
  for (const auto& p : epochs) out << p.epoch << ',' << p.learning_rate << ',' << p.loss << ',' << p.accuracy << '\n';
}

EmbeddingModel::EmbeddingModel(BackboneConfig backbone, int class_count, MarginHeadConfig head,
                               std::uint64_t seed)
    : backbone_cfg_(backbone), head_cfg_(head), class_count_(class_count) {
  backbone_cfg_.validate();
  head_cfg_.validate();
  if (class_count < 2) throw InvalidArgument("embedding model needs at least 2 classes");
  using namespace numerics;
  Rng rng(derive_seed(seed, {tag("discriminator_init")}));
  const auto w = static_cast<std::size_t>(backbone.width);
  const auto c = static_cast<std::size_t>(backbone.channels);
  backbone_.add(Conv2d<float>("b.conv1", c, w, 3, rng));
  backbone_.add(GroupNorm<float>("b.gn1", 4, w));
  backbone_.add(SiLU<float>("b.act1"));
  backbone_.add(AvgPool2d<float>("b.pool1"));
  backbone_.add(Conv2d<float>("b.conv2", w, 2 * w, 3, rng));
  backbone_.add(GroupNorm<float>("b.gn2", 4, 2 * w));
  backbone_.add(SiLU<float>("b.act2"));
  backbone_.add(AvgPool2d<float>("b.pool2"));
  backbone_.add(Conv2d<float>("b.conv3", 2 * w, 4 * w, 3, rng));
  backbone_.add(GroupNorm<float>("b.gn3", 4, 4 * w));
  backbone_.add(SiLU<float>("b.act3"));
  backbone_.add(AvgPool2d<float>("b.pool3"));
  backbone_.add(Flatten<float>("b.flatten"));
  const auto side = static_cast<std::size_t>(backbone.image_size / 8);
  backbone_.add(Linear<float>("b.proj", 4 * w * side * side, static_cast<std::size_t>(backbone.embedding_dim), rng));
  backbone_.add(L2Normalize<float>("b.l2"));

  Tensor hw({static_cast<std::size_t>(class_count), static_cast<std::size_t>(backbone.embedding_dim)});
  for (auto& v : hw.values()) v = static_cast<float>(rng.normal());
  head_weight_ = Parameter<float>("head.weight", std::move(hw));
}

Tensor EmbeddingModel::embed_batch(const Tensor& images, std::vector<float>* norms) {
  const auto s = static_cast<std::size_t>(backbone_cfg_.image_size);
  if (images.rank() != 4 || images.dim(1) != static_cast<std::size_t>(backbone_cfg_.channels) ||
      images.dim(2) != s || images.dim(3) != s) {
    throw ShapeError("embed: expected [B, " + std::to_string(backbone_cfg_.channels) + ", " + std::to_string(s) +
                     ", " + std::to_string(s) + "], got " + numerics::shape_string(images.shape()));
  }
  Tensor out = backbone_.forward(images);
  if (norms != nullptr) {
    const auto& l2 = std::get<numerics::L2Normalize<float>>(backbone_.layer(backbone_.depth() - 1));
    *norms = l2.norms();
  }
  return out;
}

Embedding EmbeddingModel::embed(const Tensor& image) {
  if (image.rank() != 3) throw ShapeError("embed: expected [C, H, W], got " + numerics::shape_string(image.shape()));
  Tensor batch = image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)});
  std::vector<float> norms;
  const Tensor e = embed_batch(batch, &norms);
  return {std::vector<float>(e.values().begin(), e.values().end()), norms.at(0)};
}

namespace {

Tensor stack(const std::vector<Tensor>& images, std::size_t begin, std::size_t end) {
  const Shape& s = images.at(begin).shape();
  Tensor out({end - begin, s[0], s[1], s[2]});
  const std::size_t stride = shape_volume(s);
  for (std::size_t i = begin; i < end; ++i) {
    require_shape(images[i], s, "stack images");
    std::copy(images[i].values().begin(), images[i].values().end(), out.data() + (i - begin) * stride);
  }
  return out;
}

}  // namespace

Tensor EmbeddingModel::embed_all(const std::vector<Tensor>& images, std::size_t chunk) {
  const auto d = static_cast<std::size_t>(embedding_dim());
  Tensor out({images.size(), d});
  for (std::size_t b = 0; b < images.size(); b += chunk) {
    const std::size_t e = std::min(images.size(), b + chunk);
    const Tensor emb = embed_batch(stack(images, b, e));
    std::copy(emb.values().begin(), emb.values().end(), out.data() + b * d);
  }
  return out;
}

std::vector<double> EmbeddingModel::logits(const Embedding& e, int target) {
  const auto d = static_cast<std::size_t>(embedding_dim());
  if (e.e.size() != d) throw ShapeError("logits: embedding dimension mismatch");
  std::vector<double> cosines(static_cast<std::size_t>(class_count_));
  const Tensor& w = head_weight_.value;
  for (std::size_t k = 0; k < cosines.size(); ++k) {
    double dot = 0, n2 = 0;
    for (std::size_t i = 0; i < d; ++i) {
      dot += static_cast<double>(w[k * d + i]) * e.e[i];
      n2 += static_cast<double>(w[k * d + i]) * w[k * d + i];
    }
    cosines[k] = dot / std::sqrt(n2);
  }
  const double z = head_cfg_.variant == HeadVariant::adaface ? ada_.scaler(e.norm, head_cfg_.adaface_h) : 0.0;
  return margin_logits(cosines, target, head_cfg_, z);
}

std::vector<int> EmbeddingModel::predict(const std::vector<Tensor>& images) {
  const Tensor e = embed_all(images);
  const auto d = static_cast<std::size_t>(embedding_dim());
  const Tensor& w = head_weight_.value;
  std::vector<double> inv_norm(static_cast<std::size_t>(class_count_));
  for (std::size_t k = 0; k < inv_norm.size(); ++k) {
    double n2 = 0;
    for (std::size_t i = 0; i < d; ++i) n2 += static_cast<double>(w[k * d + i]) * w[k * d + i];
    inv_norm[k] = 1.0 / std::sqrt(n2);
  }
  std::vector<int> out;
  for (std::size_t r = 0; r < images.size(); ++r) {
    int best = 0;
    double best_cos = -2;
    for (std::size_t k = 0; k < inv_norm.size(); ++k) {
      double dot = 0;
      for (std::size_t i = 0; i < d; ++i) dot += static_cast<double>(w[k * d + i]) * e[r * d + i];
      if (dot * inv_norm[k] > best_cos) {
        best_cos = dot * inv_norm[k];
        best = static_cast<int>(k);
      }
    }
    out.push_back(best);
  }
  return out;
}

ParamList<float> EmbeddingModel::parameters() {
  ParamList<float> out = backbone_.parameters();
  out.push_back(&head_weight_);
  return out;
}

ParameterSet EmbeddingModel::snapshot() { return ParameterSet::snapshot(parameters()); }

void EmbeddingModel::load(const ParameterSet& set) { set.load_into(parameters()); }

namespace {

// Pixel-space jitter: edge-replicated random shift and a brightness offset.
Tensor augment(const Tensor& img, const TrainSchedule& sch, Rng& rng) {
  Tensor out = img;
  const std::size_t ch = img.dim(0), h = img.dim(1), w = img.dim(2);
  if (sch.random_crop && sch.crop_padding > 0) {
    const long span = 2L * sch.crop_padding + 1;
    const long dy = static_cast<long>(rng.index(static_cast<std::uint64_t>(span))) - sch.crop_padding;
    const long dx = static_cast<long>(rng.index(static_cast<std::uint64_t>(span))) - sch.crop_padding;
    for (std::size_t c = 0; c < ch; ++c) {
      for (std::size_t y = 0; y < h; ++y) {
        const auto sy = static_cast<std::size_t>(std::clamp<long>(static_cast<long>(y) + dy, 0, static_cast<long>(h) - 1));
        for (std::size_t x = 0; x < w; ++x) {
          const auto sx = static_cast<std::size_t>(std::clamp<long>(static_cast<long>(x) + dx, 0, static_cast<long>(w) - 1));
          out[(c * h + y) * w + x] = img[(c * h + sy) * w + sx];
        }
      }
    }
  }
  if (sch.brightness_jitter && sch.brightness > 0) {
    const auto delta = static_cast<float>(rng.uniform(-sch.brightness, sch.brightness));
    for (auto& v : out.values()) v = std::clamp(v + delta, -1.0f, 1.0f);
  }
  return out;
}

std::vector<float> adaface_scalers(const EmbeddingModel& model, const std::vector<float>& norms) {
  std::vector<float> z;
  if (model.head_config().variant != HeadVariant::adaface) return z;
  for (float n : norms) z.push_back(static_cast<float>(model.adaface_stats().scaler(n, model.head_config().adaface_h)));
  return z;
}

// One forward/backward over a micro-batch. Accumulates into the grads.
HeadResult<float> accumulate_step(EmbeddingModel& model, const Tensor& batch, const std::vector<int>& labels) {
  std::vector<float> norms;
  const Tensor emb = model.embed_batch(batch, &norms);
  const auto& cfg = model.head_config();
  if (cfg.variant == HeadVariant::adaface) {
    const std::vector<double> nd(norms.begin(), norms.end());
    model.adaface_stats().update(nd, cfg.adaface_momentum);
  }
  const auto z = adaface_scalers(model, norms);
  auto head = margin_head_loss<float>(emb, model.head_weight().value, labels, cfg, z);
  model.backbone().backward(head.d_embeddings);
  numerics::add_inplace(model.head_weight().grad, head.d_weight);
  model.head_weight().has_grad = true;
  return head;
}

}  // namespace

EvalLoss evaluate_loss(EmbeddingModel& model, const dataset::LabeledImages& data) {
  if (data.size() == 0) throw InvalidArgument("evaluate_loss: empty data");
  const std::size_t chunk = 256;
  AdafaceStats saved = model.adaface_stats();
  if (model.head_config().variant == HeadVariant::adaface && !saved.initialized) {
    std::vector<double> all;
    for (std::size_t b = 0; b < data.size(); b += chunk) {
      std::vector<float> norms;
      model.embed_batch(stack(data.images, b, std::min(data.size(), b + chunk)), &norms);
      all.insert(all.end(), norms.begin(), norms.end());
    }
    model.adaface_stats().update(all, 1.0);
  }
  double loss = 0;
  std::size_t correct = 0;
  for (std::size_t b = 0; b < data.size(); b += chunk) {
    const std::size_t e = std::min(data.size(), b + chunk);
    std::vector<float> norms;
    const Tensor emb = model.embed_batch(stack(data.images, b, e), &norms);
    const std::vector<int> labels(data.labels.begin() + static_cast<long>(b), data.labels.begin() + static_cast<long>(e));
    const auto z = adaface_scalers(model, norms);
    const auto r = margin_head_loss<float>(emb, model.head_weight().value, labels, model.head_config(), z);
    loss += static_cast<double>(r.loss) * static_cast<double>(e - b);
    correct += r.correct;
  }
  model.adaface_stats() = saved;
  return {loss / static_cast<double>(data.size()), static_cast<double>(correct) / static_cast<double>(data.size())};
}

EmbeddingModel train_discriminator(const dataset::LabeledImages& data, int class_count,
                                   const BackboneConfig& backbone, const MarginHeadConfig& head,
                                   const TrainSchedule& schedule, std::uint64_t seed, const EpochCallback& on_epoch) {
  schedule.validate();
  if (data.size() == 0) throw InvalidArgument("train_discriminator: empty training set");
  std::vector<int> per_class(static_cast<std::size_t>(std::max(class_count, 0)), 0);
  for (int y : data.labels) {
    if (y < 0 || y >= class_count) throw InvalidArgument("train_discriminator: label " + std::to_string(y) + " out of range");
    ++per_class[static_cast<std::size_t>(y)];
  }
  if (class_count < 2) throw InvalidArgument("train_discriminator: need at least 2 classes");
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    if (per_class[c] == 0) throw InvalidArgument("train_discriminator: class " + std::to_string(c) + " has no samples");
  }

  EmbeddingModel model(backbone, class_count, head, seed);
  model.curve.initial_loss = evaluate_loss(model, data).loss;
  const auto params = model.parameters();
  numerics::SgdOptimizer opt(schedule.sgd, params);
  numerics::zero_grads(params);

  const std::size_t n = data.size();
  const auto bs = static_cast<std::size_t>(schedule.batch_size);
  const std::size_t steps_per_epoch = (n + bs - 1) / bs;
  const Shape& img_shape = data.images.front().shape();

  for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(derive_seed(seed, {tag("epoch_order"), static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), shuffle.engine());
    Rng aug(derive_seed(seed, {tag("augment"), static_cast<std::uint64_t>(epoch)}));

    double loss_sum = 0;
    std::size_t correct = 0;
    int pending = 0;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      const std::size_t begin = step * bs, end = std::min(n, begin + bs);
      Tensor batch({end - begin, img_shape[0], img_shape[1], img_shape[2]});
      std::vector<int> labels;
      const std::size_t stride = shape_volume(img_shape);
      for (std::size_t i = begin; i < end; ++i) {
        const Tensor img = augment(data.images[order[i]], schedule, aug);
        std::copy(img.values().begin(), img.values().end(), batch.data() + (i - begin) * stride);
        labels.push_back(data.labels[order[i]]);
      }
      const double lr = numerics::scheduled_lr(schedule.sgd, epoch,
                                               static_cast<double>(step) / static_cast<double>(steps_per_epoch));
      try {
        const auto r = accumulate_step(model, batch, labels);
        loss_sum += r.loss;
        correct += r.correct;
        if (++pending == schedule.grad_accum_steps || step + 1 == steps_per_epoch) {
          if (pending > 1) {
            const float inv = 1.0f / static_cast<float>(pending);
            for (auto* p : params)
              for (auto& g : p->grad.values()) g *= inv;
          }
          opt.set_learning_rate(lr);
          opt.step(params);
          numerics::zero_grads(params);
          pending = 0;
        }
      } catch (const NumericalError& e) {
        throw NumericalError("train_discriminator", "diverged at epoch " + std::to_string(epoch) + " step " +
                                                        std::to_string(step) + " (lr " + std::to_string(lr) +
                                                        "): " + e.what());
      }
    }
    CurvePoint pt{epoch, numerics::milestone_lr(schedule.sgd, epoch), loss_sum / static_cast<double>(steps_per_epoch),
                  static_cast<double>(correct) / static_cast<double>(n)};
    model.curve.epochs.push_back(pt);
    if (on_epoch) on_epoch(pt);
  }
  const auto fin = evaluate_loss(model, data);
  model.curve.final_loss = fin.loss;
  model.curve.final_accuracy = fin.accuracy;
  return model;
}

EmbeddingModel train_discriminator(const dataset::DatasetManifest& train, const BackboneConfig& backbone,
                                   const MarginHeadConfig& head, const TrainSchedule& schedule, std::uint64_t seed,
                                   const EpochCallback& on_epoch) {
  return train_discriminator(dataset::load_images(train), train.class_count, backbone, head, schedule, seed, on_epoch);
}

void save_model(EmbeddingModel& model, const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  numerics::save_checkpoint(file, model.snapshot());
  const auto& b = model.backbone_config();
  const auto& h = model.head_config();
  nlohmann::json j;
  j["backbone"] = {{"image_size", b.image_size}, {"channels", b.channels}, {"width", b.width},
                   {"embedding_dim", b.embedding_dim}};
  j["head"] = {{"variant", to_string(h.variant)}, {"margin", h.margin}, {"scale", h.scale},
               {"adaface_h", h.adaface_h}, {"adaface_momentum", h.adaface_momentum}};
  j["class_count"] = model.class_count();
  j["adaface_stats"] = {{"mean", model.adaface_stats().mean}, {"std", model.adaface_stats().std},
                        {"initialized", model.adaface_stats().initialized}};
  j["curve"] = {{"initial_loss", model.curve.initial_loss}, {"final_loss", model.curve.final_loss},
                {"final_accuracy", model.curve.final_accuracy}};
  std::ofstream out(file.string() + ".json");
  if (!out) throw Error("cannot write " + file.string() + ".json");
  out << j.dump(2) << '\n';
}

EmbeddingModel load_model(const std::filesystem::path& file) {
  std::ifstream in(file.string() + ".json");
  if (!in) throw FormatError("missing model metadata " + file.string() + ".json");
  nlohmann::json j;
  try {
    in >> j;
    BackboneConfig b{j.at("backbone").at("image_size"), j.at("backbone").at("channels"), j.at("backbone").at("width"),
                     j.at("backbone").at("embedding_dim")};
    MarginHeadConfig h;
    h.variant = parse_head_variant(j.at("head").at("variant"));
    h.margin = j.at("head").at("margin");
    h.scale = j.at("head").at("scale");
    h.adaface_h = j.at("head").at("adaface_h");
    h.adaface_momentum = j.at("head").at("adaface_momentum");
    EmbeddingModel model(b, j.at("class_count"), h, 0);
    model.load(numerics::load_checkpoint(file));
    model.adaface_stats() = {j.at("adaface_stats").at("mean"), j.at("adaface_stats").at("std"),
                             j.at("adaface_stats").at("initialized")};
    model.curve.initial_loss = j.at("curve").at("initial_loss");
    model.curve.final_loss = j.at("curve").at("final_loss");
    model.curve.final_accuracy = j.at("curve").at("final_accuracy");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad model metadata " + file.string() + ".json: " + e.what());
  }
}

}  // namespace auggen::discriminator
