#include "auggen/pipeline/config.hpp"

#include <fstream>
#include <set>

#include "auggen/dataset/stats.hpp"
#include "auggen/pipeline/errors.hpp"
#include "auggen/pipeline/hash.hpp"

namespace auggen::pipeline {

namespace {

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be reported as typos.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(where(key) + ": wrong type");
    }
  }

  std::optional<Section> sub(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return std::nullopt;
    return Section(*it, where(key));
  }

  bool has(const char* key) const { return j_.contains(key); }
  const Json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown key " + where(k.c_str()));
  }

  std::string where(const char* key = nullptr) const {
    std::string p = path_.empty() ? std::string("<root>") : path_;
    if (key) p = path_.empty() ? std::string(key) : path_ + "." + key;
    return p;
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
auto parse_enum(Section& s, const char* key, const std::string& value, Fn fn) {
  try {
    return fn(value);
  } catch (const std::exception&) {
    throw ConfigError(s.where(key) + ": unknown value \"" + value + "\"");
  }
}

Json backbone_json(const discriminator::BackboneConfig& b) {
  return Json{{"image_size", b.image_size}, {"channels", b.channels}, {"width", b.width},
              {"embedding_dim", b.embedding_dim}};
}

void read_backbone(Section s, discriminator::BackboneConfig& b) {
  s.get("image_size", b.image_size);
  s.get("channels", b.channels);
  s.get("width", b.width);
  s.get("embedding_dim", b.embedding_dim);
  s.finish();
}

Json head_json(const discriminator::MarginHeadConfig& h) {
  return Json{{"variant", discriminator::to_string(h.variant)},
              {"margin", h.margin},
              {"scale", h.scale},
              {"adaface_h", h.adaface_h},
              {"adaface_momentum", h.adaface_momentum}};
}

void read_head(Section s, discriminator::MarginHeadConfig& h) {
  std::string v = discriminator::to_string(h.variant);
  s.get("variant", v);
  h.variant = parse_enum(s, "variant", v, [](const std::string& x) { return discriminator::parse_head_variant(x); });
  s.get("margin", h.margin);
  s.get("scale", h.scale);
  s.get("adaface_h", h.adaface_h);
  s.get("adaface_momentum", h.adaface_momentum);
  s.finish();
}

Json schedule_json(const discriminator::TrainSchedule& t) {
  return Json{{"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"grad_accum_steps", t.grad_accum_steps},
              {"learning_rate", t.sgd.learning_rate},
              {"momentum", t.sgd.momentum},
              {"weight_decay", t.sgd.weight_decay},
              {"milestones", t.sgd.milestone_epochs},
              {"decay_factor", t.sgd.decay_factor},
              {"warmup_epochs", t.sgd.warmup_epochs},
              {"brightness_jitter", t.brightness_jitter},
              {"brightness", t.brightness},
              {"random_crop", t.random_crop},
              {"crop_padding", t.crop_padding}};
}

void read_schedule(Section s, discriminator::TrainSchedule& t) {
  s.get("epochs", t.epochs);
  s.get("batch_size", t.batch_size);
  s.get("grad_accum_steps", t.grad_accum_steps);
  s.get("learning_rate", t.sgd.learning_rate);
  s.get("momentum", t.sgd.momentum);
  s.get("weight_decay", t.sgd.weight_decay);
  s.get("milestones", t.sgd.milestone_epochs);
  s.get("decay_factor", t.sgd.decay_factor);
  s.get("warmup_epochs", t.sgd.warmup_epochs);
  s.get("brightness_jitter", t.brightness_jitter);
  s.get("brightness", t.brightness);
  s.get("random_crop", t.random_crop);
  s.get("crop_padding", t.crop_padding);
  s.finish();
}

Json pairs_json(const std::vector<std::pair<int, int>>& v) {
  Json a = Json::array();
  for (auto [c, n] : v) a.push_back(Json::array({c, n}));
  return a;
}

Json weight_pairs_json(const std::vector<std::pair<double, double>>& v) {
  Json a = Json::array();
  for (auto [x, y] : v) a.push_back(Json::array({x, y}));
  return a;
}

}  // namespace

PipelineConfig::PipelineConfig() {
  dataset.toy.num_classes = 8;
  dataset.toy.samples_per_class = 200;

  oracle.head.variant = discriminator::HeadVariant::plain_softmax;
  oracle.schedule.epochs = 15;
  oracle.schedule.sgd.milestone_epochs = {10, 12, 15};

  generator.train_steps = 3000;
}

void PipelineConfig::validate() const {
  auto check = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  // Module validators throw InvalidArgument; report them as config errors.
  try {
    dataset.toy.validate();
    discriminator.backbone.validate();
    discriminator.head.validate();
    discriminator.schedule.validate();
    oracle.backbone.validate();
    oracle.head.validate();
    oracle.schedule.validate();
    generator.validate();
    mixsearch.grid.validate();
    eval.eval.validate();
    dataset::parse_ls_policy(dataset.ls_policy);
    mixsearch::parse_weight_preset(auggen.weights);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  const auto& t = dataset.toy;
  check(t.latents.empty(), "dataset: explicit latents are not configurable");
  check(dataset.heldout_classes >= 2, "dataset.heldout_classes must be >= 2");
  check(dataset.heldout_samples >= 2, "dataset.heldout_samples must be >= 2");
  check(dataset.extra_classes >= 0, "dataset.extra_classes must be >= 0");
  check(dataset.oracle_samples >= 1, "dataset.oracle_samples must be >= 1");
  check(discriminator.backbone.image_size == t.image_size && discriminator.backbone.channels == t.channels,
        "discriminator.backbone image_size/channels must match dataset");
  check(oracle.backbone.image_size == t.image_size && oracle.backbone.channels == t.channels,
        "oracle.backbone image_size/channels must match dataset");
  check(generator.net.image_size == t.image_size && generator.net.channels == t.channels,
        "generator.net image_size/channels must match dataset");
  check(!discriminator.seeds.empty(), "discriminator.seeds must not be empty");
  {
    std::set<std::uint64_t> uniq(discriminator.seeds.begin(), discriminator.seeds.end());
    check(uniq.size() == discriminator.seeds.size(), "discriminator.seeds must be distinct");
  }
  check(mixsearch.policy != mixsearch::SelectionPolicy::full || !mixsearch.grid.diagonal_only,
        "mixsearch.policy \"full\" needs the full grid (diagonal_only false)");
  check(repro.samples_per_class >= 1, "repro.samples_per_class must be >= 1");
  check(auggen.batch >= 1, "auggen.batch must be >= 1");
  check(auggen.classes >= 1 && auggen.samples >= 1, "auggen.classes and auggen.samples must be >= 1");
  check(auggen.probe_classes >= 0, "auggen.probe_classes must be >= 0");
  check(auggen.probe_classes == 0 || auggen.probe_samples >= 2, "auggen.probe_samples must be >= 2");
  check(eval.k >= 1, "eval.k must be >= 1");
  check(!presets.seeds.empty(), "presets.seeds must not be empty");
  for (int c : presets.sweep_classes) check(c >= 1, "presets.sweep_classes must be >= 1");
  for (int n : presets.sweep_samples) check(n >= 1, "presets.sweep_samples must be >= 1");
  for (auto [c, n] : presets.real_vs_synth_aug) check(c >= 1 && n >= 1, "presets.real_vs_synth_aug cells must be >= 1");
  for (int e : presets.real_vs_synth_extra)
    check(e >= 1 && e <= dataset.extra_classes, "presets.real_vs_synth_extra must lie in [1, dataset.extra_classes]");
  for (auto [a, b] : presets.correlation_weights)
    check(a >= generator::kMinMixWeight && a <= generator::kMaxMixWeight && b >= generator::kMinMixWeight &&
              b <= generator::kMaxMixWeight,
          "presets.correlation_weights must lie in [0.1, 1.1]");
  static const std::set<std::string> kStages{"synth-data", "train-disc", "train-gen", "repro",      "grid-search",
                                             "make-aug",   "train-mixed", "eval",     "gen-metrics", "report"};
  for (const auto& s : skip) check(kStages.count(s) > 0, "skip: unknown stage \"" + s + "\"");
}

Json PipelineConfig::to_json() const {
  const auto& t = dataset.toy;
  Json toy{{"classes", t.num_classes},
           {"samples_per_class", t.samples_per_class},
           {"image_size", t.image_size},
           {"channels", t.channels},
           {"strokes", t.strokes},
           {"rotation_deg", t.rotation_deg},
           {"translation_px", t.translation_px},
           {"brightness", t.brightness},
           {"noise_amplitude", t.noise_amplitude},
           {"min_latent_separation", t.min_latent_separation}};
  if (t.long_tail)
    toy["long_tail"] = Json{{"min_count", t.long_tail->min_count},
                            {"max_count", t.long_tail->max_count},
                            {"exponent", t.long_tail->exponent}};
  toy["heldout_classes"] = dataset.heldout_classes;
  toy["heldout_samples"] = dataset.heldout_samples;
  toy["extra_classes"] = dataset.extra_classes;
  toy["oracle_samples"] = dataset.oracle_samples;
  toy["ls_policy"] = dataset.ls_policy;
  toy["image_format"] = dataset::to_string(dataset.format);

  const auto& g = generator;
  Json gen{{"base_channels", g.net.base_channels},
           {"emb_dim", g.net.emb_dim},
           {"fourier_dim", g.net.fourier_dim},
           {"groups", g.net.groups},
           {"sigma_data", g.noise.sigma_data},
           {"sigma_min", g.noise.sigma_min},
           {"sigma_max", g.noise.sigma_max},
           {"p_mean", g.noise.p_mean},
           {"p_std", g.noise.p_std},
           {"sampler_steps", g.sampler.steps},
           {"rho", g.sampler.rho},
           {"learning_rate", g.adam.learning_rate},
           {"beta1", g.adam.beta1},
           {"beta2", g.adam.beta2},
           {"adam_epsilon", g.adam.epsilon},
           {"train_steps", g.train_steps},
           {"batch_size", g.batch_size},
           {"warmup_steps", g.warmup_steps},
           {"ema_length", g.ema_length},
           {"validation_samples", g.validation_samples},
           {"log_every", g.log_every}};

  Json j;
  j["seed"] = seed;
  j["dataset"] = toy;
  j["discriminator"] = Json{{"backbone", backbone_json(discriminator.backbone)},
                            {"head", head_json(discriminator.head)},
                            {"schedule", schedule_json(discriminator.schedule)},
                            {"seeds", discriminator.seeds}};
  j["oracle"] = Json{{"backbone", backbone_json(oracle.backbone)},
                     {"head", head_json(oracle.head)},
                     {"schedule", schedule_json(oracle.schedule)}};
  j["generator"] = gen;
  j["repro"] = Json{{"samples_per_class", repro.samples_per_class}};
  j["mixsearch"] = Json{{"weights", mixsearch.grid.weights},
                        {"reps", mixsearch.grid.reps},
                        {"pairs", mixsearch.grid.pairs},
                        {"diagonal_only", mixsearch.grid.diagonal_only},
                        {"batch", mixsearch.grid.batch},
                        {"policy", mixsearch::to_string(mixsearch.policy)}};
  j["auggen"] = Json{{"classes", auggen.classes},         {"samples", auggen.samples},
                     {"weights", auggen.weights},         {"probe_classes", auggen.probe_classes},
                     {"probe_samples", auggen.probe_samples}, {"batch", auggen.batch}};
  j["eval"] = Json{{"fpr_targets", eval.eval.fpr_targets},
                   {"folds", eval.eval.folds},
                   {"max_genuine_per_identity", eval.eval.pairs.max_genuine_per_identity},
                   {"impostor_pairs", eval.eval.pairs.impostor},
                   {"benchmark", eval.eval.benchmark},
                   {"k", eval.k}};
  j["presets"] = Json{{"seeds", presets.seeds},
                      {"sweep_classes", presets.sweep_classes},
                      {"sweep_samples", presets.sweep_samples},
                      {"real_vs_synth_aug", pairs_json(presets.real_vs_synth_aug)},
                      {"real_vs_synth_extra", presets.real_vs_synth_extra},
                      {"correlation_weights", weight_pairs_json(presets.correlation_weights)}};
  j["skip"] = skip;
  return j;
}

PipelineConfig PipelineConfig::from_json(const Json& j) {
  PipelineConfig c;
  Section root(j, "");
  root.get("seed", c.seed);
  if (root.has("out")) {
    std::string out;
    root.get("out", out);
    c.out = out;
  }
  if (auto s = root.sub("dataset")) {
    auto& t = c.dataset.toy;
    s->get("classes", t.num_classes);
    s->get("samples_per_class", t.samples_per_class);
    s->get("image_size", t.image_size);
    s->get("channels", t.channels);
    s->get("strokes", t.strokes);
    s->get("rotation_deg", t.rotation_deg);
    s->get("translation_px", t.translation_px);
    s->get("brightness", t.brightness);
    s->get("noise_amplitude", t.noise_amplitude);
    s->get("min_latent_separation", t.min_latent_separation);
    if (auto lt = s->sub("long_tail")) {
      dataset::LongTail tail;
      lt->get("min_count", tail.min_count);
      lt->get("max_count", tail.max_count);
      lt->get("exponent", tail.exponent);
      lt->finish();
      t.long_tail = tail;
    }
    s->get("heldout_classes", c.dataset.heldout_classes);
    s->get("heldout_samples", c.dataset.heldout_samples);
    s->get("extra_classes", c.dataset.extra_classes);
    s->get("oracle_samples", c.dataset.oracle_samples);
    s->get("ls_policy", c.dataset.ls_policy);
    std::string fmt = std::string(dataset::to_string(c.dataset.format));
    s->get("image_format", fmt);
    c.dataset.format =
        parse_enum(*s, "image_format", fmt, [](const std::string& x) { return dataset::parse_image_format(x); });
    s->finish();
  }
  // Backbone geometry follows the dataset unless given explicitly.
  c.discriminator.backbone.image_size = c.oracle.backbone.image_size = c.generator.net.image_size =
      c.dataset.toy.image_size;
  c.discriminator.backbone.channels = c.oracle.backbone.channels = c.generator.net.channels = c.dataset.toy.channels;

  if (auto s = root.sub("discriminator")) {
    if (auto b = s->sub("backbone")) read_backbone(*b, c.discriminator.backbone);
    if (auto h = s->sub("head")) read_head(*h, c.discriminator.head);
    if (auto t = s->sub("schedule")) read_schedule(*t, c.discriminator.schedule);
    s->get("seeds", c.discriminator.seeds);
    s->finish();
  }
  if (auto s = root.sub("oracle")) {
    if (auto b = s->sub("backbone")) read_backbone(*b, c.oracle.backbone);
    if (auto h = s->sub("head")) read_head(*h, c.oracle.head);
    if (auto t = s->sub("schedule")) read_schedule(*t, c.oracle.schedule);
    s->finish();
  }
  if (auto s = root.sub("generator")) {
    auto& g = c.generator;
    s->get("base_channels", g.net.base_channels);
    s->get("emb_dim", g.net.emb_dim);
    s->get("fourier_dim", g.net.fourier_dim);
    s->get("groups", g.net.groups);
    s->get("sigma_data", g.noise.sigma_data);
    s->get("sigma_min", g.noise.sigma_min);
    s->get("sigma_max", g.noise.sigma_max);
    s->get("p_mean", g.noise.p_mean);
    s->get("p_std", g.noise.p_std);
    s->get("sampler_steps", g.sampler.steps);
    s->get("rho", g.sampler.rho);
    s->get("learning_rate", g.adam.learning_rate);
    s->get("beta1", g.adam.beta1);
    s->get("beta2", g.adam.beta2);
    s->get("adam_epsilon", g.adam.epsilon);
    s->get("train_steps", g.train_steps);
    s->get("batch_size", g.batch_size);
    s->get("warmup_steps", g.warmup_steps);
    s->get("ema_length", g.ema_length);
    s->get("validation_samples", g.validation_samples);
    s->get("log_every", g.log_every);
    s->finish();
  }
  if (auto s = root.sub("repro")) {
    s->get("samples_per_class", c.repro.samples_per_class);
    s->finish();
  }
  if (auto s = root.sub("mixsearch")) {
    auto& g = c.mixsearch.grid;
    s->get("weights", g.weights);
    s->get("reps", g.reps);
    s->get("pairs", g.pairs);
    s->get("diagonal_only", g.diagonal_only);
    s->get("batch", g.batch);
    std::string policy(mixsearch::to_string(c.mixsearch.policy));
    s->get("policy", policy);
    c.mixsearch.policy =
        parse_enum(*s, "policy", policy, [](const std::string& x) { return mixsearch::parse_selection_policy(x); });
    s->finish();
  }
  if (auto s = root.sub("auggen")) {
    s->get("classes", c.auggen.classes);
    s->get("samples", c.auggen.samples);
    s->get("weights", c.auggen.weights);
    s->get("probe_classes", c.auggen.probe_classes);
    s->get("probe_samples", c.auggen.probe_samples);
    s->get("batch", c.auggen.batch);
    s->finish();
  }
  if (auto s = root.sub("eval")) {
    s->get("fpr_targets", c.eval.eval.fpr_targets);
    s->get("folds", c.eval.eval.folds);
    s->get("max_genuine_per_identity", c.eval.eval.pairs.max_genuine_per_identity);
    s->get("impostor_pairs", c.eval.eval.pairs.impostor);
    s->get("benchmark", c.eval.eval.benchmark);
    s->get("k", c.eval.k);
    s->finish();
  }
  if (auto s = root.sub("presets")) {
    auto& p = c.presets;
    s->get("seeds", p.seeds);
    s->get("sweep_classes", p.sweep_classes);
    s->get("sweep_samples", p.sweep_samples);
    s->get("real_vs_synth_aug", p.real_vs_synth_aug);
    s->get("real_vs_synth_extra", p.real_vs_synth_extra);
    s->get("correlation_weights", p.correlation_weights);
    s->finish();
  }
  root.get("skip", c.skip);
  root.finish();
  c.validate();
  return c;
}

std::string PipelineConfig::canonical() const { return to_json().dump(); }

std::string PipelineConfig::hash() const { return sha256_hex(canonical()); }

PipelineConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config " + file.string());
  Json j;
  try {
    j = Json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  return PipelineConfig::from_json(j);
}

}  // namespace auggen::pipeline
