#include "auggen/pipeline/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "auggen/augment/augment.hpp"
#include "auggen/dataset/stats.hpp"
#include "auggen/dataset/toy.hpp"
#include "auggen/evalbench/evaluate.hpp"
#include "auggen/mixsearch/backend.hpp"
#include "auggen/numerics/rng.hpp"
#include "auggen/pipeline/errors.hpp"
#include "auggen/pipeline/format.hpp"
#include "auggen/pipeline/hash.hpp"
#include "auggen/pipeline/report.hpp"

namespace auggen::pipeline {

namespace fs = std::filesystem;
using numerics::derive_seed;
using numerics::tag;

struct Pipeline::StageDef {
  std::string name;
  std::vector<std::string> deps;
  std::function<Json(const PipelineConfig&, const RunOptions&)> sections;
  void (Pipeline::*run)(const fs::path&);
};

namespace {

const std::vector<std::string> kStages{"synth-data",  "train-disc", "train-gen", "repro",       "grid-search",
                                       "make-aug",    "train-mixed", "eval",      "gen-metrics", "report"};
const std::vector<std::string> kPresets{"mixing-sweep", "weighting-ablation", "real-vs-synth", "metrics-correlation"};

std::string seed_dir(const char* prefix, std::uint64_t seed) { return prefix + std::to_string(seed); }

void write_text(const fs::path& file, const std::string& text) {
  fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot write " + file.string());
  out << text;
}

// Stage sections: the parts of the config a stage's outputs depend on.
Json dataset_section(const PipelineConfig& c) {
  Json d = c.to_json()["dataset"];
  d.erase("ls_policy");
  return d;
}

Json pick(const PipelineConfig& c, std::initializer_list<const char*> keys) {
  const Json all = c.to_json();
  Json out = Json::object();
  for (const char* k : keys) out[k] = all.at(k);
  return out;
}

}  // namespace

const std::vector<std::string>& stage_names() { return kStages; }
const std::vector<std::string>& preset_names() { return kPresets; }
bool is_stage(const std::string& n) { return std::find(kStages.begin(), kStages.end(), n) != kStages.end(); }
bool is_preset(const std::string& n) { return std::find(kPresets.begin(), kPresets.end(), n) != kPresets.end(); }

std::string training_key(const dataset::DatasetManifest& train, const PipelineConfig& cfg, std::uint64_t seed) {
  Json d = cfg.to_json()["discriminator"];
  d.erase("seeds");
  std::string s = std::string(kCodeVersion) + '\n' + d.dump() + '\n' + std::to_string(seed) + '\n' +
                  std::to_string(train.class_count) + '\n';
  for (const auto& r : train.records)
    s += std::to_string(r.sample_id) + '\t' + std::to_string(r.class_id) + '\t' + sha256_file(train.image_path(r)) +
         '\n';
  return sha256_hex(s);
}

Pipeline::~Pipeline() = default;
Pipeline::Pipeline(Pipeline&&) noexcept = default;

Pipeline::Pipeline(PipelineConfig cfg, RunOptions opts)
    : cfg_(std::move(cfg)), opts_(std::move(opts)), root_(fs::absolute(cfg_.out).lexically_normal()) {
  cfg_.validate();
  if (opts_.jobs < 1) throw ConfigError("--jobs must be >= 1");
  for (const auto& f : opts_.formats)
    if (f != "csv" && f != "txt" && f != "svg") throw ConfigError("unknown format \"" + f + "\"");

  defs_ = {
      {"synth-data", {}, [](const PipelineConfig& c, const RunOptions&) { return dataset_section(c); },
       &Pipeline::synth_data},
      {"train-disc", {"synth-data"},
       [](const PipelineConfig& c, const RunOptions&) { return pick(c, {"discriminator", "oracle"}); },
       &Pipeline::train_disc},
      {"train-gen", {"synth-data"},
       [](const PipelineConfig& c, const RunOptions&) { return pick(c, {"generator"}); }, &Pipeline::train_gen},
      {"repro", {"synth-data", "train-disc", "train-gen"},
       [](const PipelineConfig& c, const RunOptions&) { return pick(c, {"repro"}); }, &Pipeline::repro},
      {"grid-search", {"synth-data", "train-disc", "train-gen"},
       [](const PipelineConfig& c, const RunOptions&) {
         Json j = pick(c, {"mixsearch"});
         j["ls_policy"] = c.dataset.ls_policy;
         return j;
       },
       &Pipeline::grid_search},
      {"make-aug", {"synth-data", "train-gen", "grid-search"},
       [](const PipelineConfig& c, const RunOptions&) {
         Json j = pick(c, {"auggen"});
         j["ls_policy"] = c.dataset.ls_policy;
         return j;
       },
       &Pipeline::make_aug},
      {"train-mixed", {"synth-data", "make-aug"},
       [](const PipelineConfig& c, const RunOptions&) { return pick(c, {"discriminator"}); },
       &Pipeline::train_mixed},
      {"eval", {"synth-data", "train-disc", "train-mixed", "make-aug"},
       [](const PipelineConfig& c, const RunOptions&) {
         Json j = pick(c, {"eval"});
         j["eval"].erase("k");  // gen-metrics only
         return j;
       },
       &Pipeline::eval},
      {"gen-metrics", {"synth-data", "train-disc", "repro", "make-aug"},
       [](const PipelineConfig& c, const RunOptions&) { return Json{{"k", c.eval.k}}; }, &Pipeline::gen_metrics},
      {"report", {"synth-data", "train-disc", "train-gen", "repro", "grid-search", "make-aug", "train-mixed", "eval",
                  "gen-metrics"},
       [](const PipelineConfig&, const RunOptions& o) {
         std::set<std::string> f(o.formats.begin(), o.formats.end());
         return Json{{"formats", std::vector<std::string>(f.begin(), f.end())}};
       },
       &Pipeline::report},
  };
  const std::vector<std::string> base{"synth-data", "train-disc", "train-gen", "grid-search",
                                      "make-aug",   "train-mixed", "eval"};
  auto preset_sections = [](const PipelineConfig& c, const RunOptions&) {
    Json j = c.to_json();
    j.erase("skip");
    return j;
  };
  defs_.push_back({"presets/mixing-sweep", base, preset_sections, &Pipeline::preset_mixing});
  defs_.push_back({"presets/weighting-ablation", base, preset_sections, &Pipeline::preset_weighting});
  defs_.push_back({"presets/real-vs-synth", base, preset_sections, &Pipeline::preset_real_vs_synth});
  defs_.push_back({"presets/metrics-correlation", base, preset_sections, &Pipeline::preset_correlation});
}

void Pipeline::log(const std::string& msg) const {
  if (opts_.log) opts_.log(msg);
}

std::uint64_t Pipeline::stage_seed(const std::string& name) const { return derive_seed(cfg_.seed, {tag(name)}); }

const Pipeline::StageDef& Pipeline::def(const std::string& name) const {
  for (const auto& d : defs_)
    if (d.name == name) return d;
  throw ConfigError("unknown stage \"" + name + "\"");
}

std::optional<std::string> Pipeline::fresh_outputs(const std::string& name) {
  if (auto it = verified_.find(name); it != verified_.end()) return it->second;
  const auto stamp = read_stamp(stage_dir(name));
  if (!stamp) return std::nullopt;
  std::string expected;
  try {
    expected = expected_inputs(def(name));
  } catch (const UpstreamMissing&) {
    return std::nullopt;
  }
  if (stamp->inputs_hash != expected || !stamp_matches_disk(*stamp, root_)) return std::nullopt;
  verified_[name] = stamp->outputs_hash;
  return stamp->outputs_hash;
}

std::string Pipeline::expected_inputs(const StageDef& d) {
  Json up = Json::object();
  for (const auto& dep : d.deps) {
    const fs::path dir = stage_dir(dep);
    const auto stamp = read_stamp(dir);
    if (!stamp) throw UpstreamMissing("missing upstream artifact " + dir.string(), dep);
    const auto h = fresh_outputs(dep);
    if (!h) throw UpstreamMissing("stale or modified upstream artifact " + dir.string(), dep);
    up[dep] = *h;
  }
  Json j{{"stage", d.name},
         {"code_version", kCodeVersion},
         {"seed", stage_seed(d.name)},
         {"config", d.sections(cfg_, opts_)},
         {"upstream", up}};
  return sha256_hex(j.dump());
}

StageOutcome Pipeline::execute(const StageDef& d) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string inputs = expected_inputs(d);
  const fs::path dir = stage_dir(d.name);
  RunLedger ledger(root_ / kLedgerFileName);

  StageOutcome outcome;
  outcome.stage = d.name;
  StageStamp stamp;
  if (auto old = read_stamp(dir); old && old->inputs_hash == inputs && stamp_matches_disk(*old, root_)) {
    stamp = *old;
    outcome.cache_hit = true;
    log("[" + d.name + "] cache hit");
  } else {
    log("[" + d.name + "] running");
    fs::remove_all(dir);
    fs::create_directories(dir);
    (this->*d.run)(dir);
    stamp.stage = d.name;
    stamp.inputs_hash = inputs;
    stamp.seed = stage_seed(d.name);
    stamp.files = digest_tree(dir, root_);
    stamp.outputs_hash = outputs_hash(stamp.files);
    write_stamp(stamp, dir);
    verified_.clear();  // downstream stamps may now be stale
  }
  verified_[d.name] = stamp.outputs_hash;
  outcome.outputs_hash = stamp.outputs_hash;
  outcome.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  LedgerRecord rec;
  rec.stamp = stamp;
  rec.config_hash = cfg_.hash();
  rec.wall_seconds = outcome.wall_seconds;
  rec.cache_hit = outcome.cache_hit;
  ledger.append(rec);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f s", outcome.wall_seconds);
  log("[" + d.name + "] done in " + buf);
  return outcome;
}

StageOutcome Pipeline::run_stage(const std::string& name) {
  if (!is_stage(name)) throw ConfigError("unknown stage \"" + name + "\"");
  return execute(def(name));
}

std::vector<StageOutcome> Pipeline::run_all() {
  std::vector<StageOutcome> out;
  for (const auto& name : kStages) {
    if (std::find(cfg_.skip.begin(), cfg_.skip.end(), name) != cfg_.skip.end()) {
      log("[" + name + "] skipped by config");
      continue;
    }
    out.push_back(execute(def(name)));
  }
  return out;
}

StageOutcome Pipeline::run_preset(const std::string& name) {
  if (!is_preset(name)) throw ConfigError("unknown preset \"" + name + "\"");
  return execute(def("presets/" + name));
}

// ---- artifact access ------------------------------------------------------

dataset::DatasetManifest Pipeline::manifest(const std::string& stage, const std::string& sub) const {
  const fs::path file = stage_dir(stage) / sub / dataset::kManifestFileName;
  if (!fs::exists(file)) throw UpstreamMissing("missing upstream artifact " + file.string(), stage);
  return dataset::load_manifest(file);
}

namespace {

discriminator::EmbeddingModel load_model_or_missing(const fs::path& file, const std::string& stage) {
  if (!fs::exists(file)) throw UpstreamMissing("missing upstream artifact " + file.string(), stage);
  return discriminator::load_model(file);
}

}  // namespace

discriminator::EmbeddingModel Pipeline::orig_model(std::uint64_t seed) const {
  return load_model_or_missing(stage_dir("train-disc") / seed_dir("orig_s", seed) / "model.ckpt", "train-disc");
}

discriminator::EmbeddingModel Pipeline::mixed_model(std::uint64_t seed) const {
  return load_model_or_missing(stage_dir("train-mixed") / seed_dir("mix_s", seed) / "model.ckpt", "train-mixed");
}

discriminator::EmbeddingModel Pipeline::oracle_model() const {
  return load_model_or_missing(stage_dir("train-disc") / "oracle" / "model.ckpt", "train-disc");
}

generator::DenoiserModel Pipeline::generator_model() const {
  const fs::path file = stage_dir("train-gen") / "generator.ckpt";
  if (!fs::exists(file)) throw UpstreamMissing("missing upstream artifact " + file.string(), "train-gen");
  return generator::load_generator(file);
}

std::vector<int> Pipeline::mixing_classes() const {
  return dataset::select_ls(manifest("synth-data", "orig"), dataset::parse_ls_policy(cfg_.dataset.ls_policy));
}

discriminator::EmbeddingModel Pipeline::train_cached(const dataset::DatasetManifest& train, std::uint64_t seed,
                                                     const fs::path& cache_dir) {
  const std::string key = training_key(train, cfg_, seed);
  for (const char* stage : {"train-disc", "train-mixed"}) {
    std::ifstream in(stage_dir(stage) / "keys.tsv");
    std::string k, rel;
    while (in >> k >> rel)
      if (k == key && fs::exists(stage_dir(stage) / rel)) {
        log("  reusing " + std::string(stage) + "/" + rel);
        return discriminator::load_model(stage_dir(stage) / rel);
      }
  }
  const fs::path file = cache_dir / key.substr(0, 16) / "model.ckpt";
  if (fs::exists(file)) return discriminator::load_model(file);
  const auto& d = cfg_.discriminator;
  auto m = discriminator::train_discriminator(train, d.backbone, d.head, d.schedule, seed);
  discriminator::save_model(m, file);
  m.curve.write_csv(file.parent_path() / "curve.csv");
  return m;
}

// ---- stages ---------------------------------------------------------------

void Pipeline::synth_data(const fs::path& dir) {
  const auto& ds = cfg_.dataset;
  auto spec = ds.toy;
  const int c = spec.num_classes, h = ds.heldout_classes, e = ds.extra_classes;
  auto all = spec;
  all.num_classes = c + h + e;
  const std::uint64_t s = stage_seed("synth-data");
  // Rejection sampling is sequential, so the first c latents do not depend on h or e.
  const auto latents = dataset::draw_class_latents(all, derive_seed(s, {tag("latents")}));
  auto slice = [&](int from, int n) {
    return std::vector<std::vector<double>>(latents.begin() + from, latents.begin() + from + n);
  };
  spec.latents = slice(0, c);
  const auto orig = dataset::synth_toy_dataset(spec, derive_seed(s, {tag("orig")}), dir / "orig", ds.format);
  dataset::resample_toy_identities(spec, slice(c, h), ds.heldout_samples, derive_seed(s, {tag("heldout")}),
                                   dir / "heldout", ds.format);
  if (e > 0)
    dataset::resample_toy_identities(spec, slice(c + h, e), spec.samples_per_class, derive_seed(s, {tag("extra")}),
                                     dir / "extra", ds.format);
  dataset::resample_toy_identities(spec, slice(0, c), ds.oracle_samples, derive_seed(s, {tag("oracle")}),
                                   dir / "oracle", ds.format);
  const auto stats = dataset::class_stats(orig);
  write_text(dir / "stats.txt", "classes " + std::to_string(orig.class_count) + "\nimages " +
                                    std::to_string(stats.total) + "\nper-class min/25%/50%/75%/max " +
                                    dataset::format_percentile_row(stats) + "\n");
  log("  D^orig: " + std::to_string(orig.records.size()) + " images, " + std::to_string(c) + " classes");
}

void Pipeline::train_disc(const fs::path& dir) {
  const auto orig = manifest("synth-data", "orig");
  const auto& d = cfg_.discriminator;
  std::string keys;
  for (std::uint64_t seed : d.seeds) {
    const std::string sub = seed_dir("orig_s", seed);
    auto on_epoch = [&](const discriminator::CurvePoint& p) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "  %s epoch %d loss %.4f acc %.3f", sub.c_str(), p.epoch, p.loss, p.accuracy);
      log(buf);
    };
    auto m = discriminator::train_discriminator(orig, d.backbone, d.head, d.schedule, seed, on_epoch);
    discriminator::save_model(m, dir / sub / "model.ckpt");
    m.curve.write_csv(dir / sub / "curve.csv");
    keys += training_key(orig, cfg_, seed) + '\t' + sub + "/model.ckpt\n";
  }
  write_text(dir / "keys.tsv", keys);

  const auto& o = cfg_.oracle;
  const auto oracle_set = manifest("synth-data", "oracle");
  auto oracle = discriminator::train_discriminator(oracle_set, o.backbone, o.head, o.schedule,
                                                   derive_seed(stage_seed("train-disc"), {tag("oracle")}));
  discriminator::save_model(oracle, dir / "oracle" / "model.ckpt");
  oracle.curve.write_csv(dir / "oracle" / "curve.csv");
  const auto data = dataset::load_images(orig);
  const auto pred = oracle.predict(data.images);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == data.labels[i];
  const double acc = pred.empty() ? 0.0 : static_cast<double>(hit) / pred.size();
  write_text(dir / "oracle" / "accuracy.json", Json{{"orig_accuracy", acc}}.dump(1) + "\n");
  log("  oracle accuracy on D^orig " + std::to_string(acc));
}

void Pipeline::train_gen(const fs::path& dir) {
  const auto orig = manifest("synth-data", "orig");
  auto on_log = [&](const generator::GeneratorCurvePoint& p) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "  step %ld loss %.4f", p.step, p.loss);
    log(buf);
  };
  auto g = generator::train_generator(orig, cfg_.generator, stage_seed("train-gen"), on_log, dir / "failed.ckpt");
  generator::save_generator(g, dir / "generator.ckpt");
  g.curve.write_csv(dir / "curve.csv");
}

void Pipeline::repro(const fs::path& dir) {
  const auto orig = manifest("synth-data", "orig");
  auto g = generator_model();
  auto oracle = oracle_model();
  const auto classes = orig.class_ids();
  const auto m = generator::generate_repro(g, classes, cfg_.repro.samples_per_class, stage_seed("repro"), dir / "data",
                                           cfg_.dataset.format);
  const auto data = dataset::load_images(m);
  const auto pred = oracle.predict(data.images);
  std::map<int, std::pair<int, int>> per;  // class -> (hits, total)
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool ok = pred[i] == data.labels[i];
    hit += ok;
    per[data.labels[i]].first += ok;
    per[data.labels[i]].second += 1;
  }
  Json pc = Json::array();
  for (const auto& [c, ht] : per) pc.push_back(Json{{"class", c}, {"accuracy", double(ht.first) / ht.second}});
  const double acc = pred.empty() ? 0.0 : static_cast<double>(hit) / pred.size();
  write_text(dir / "fidelity.json", Json{{"oracle_accuracy", acc},
                                         {"samples_per_class", cfg_.repro.samples_per_class},
                                         {"per_class", pc}}
                                            .dump(1) +
                                        "\n");
  log("  oracle labels " + std::to_string(acc) + " of D^repro as the conditioning class");
}

void Pipeline::grid_search(const fs::path& dir) {
  auto g = generator_model();
  auto f = orig_model(cfg_.discriminator.seeds.front());
  const auto ls = mixing_classes();
  auto spec = cfg_.mixsearch.grid;
  spec.seed = stage_seed("grid-search");
  const auto total = spec.cells().size();
  auto on_cell = [&](std::size_t i, const mixsearch::GridCellResult& c) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "  cell %zu/%zu (%.1f, %.1f) m_total %.4f", i + 1, total, c.alpha, c.beta,
                  c.m_total);
    log(buf);
  };
  auto rep = mixsearch::grid_search(mixsearch::model_backend_factory(g, f, spec.batch), ls, spec, opts_.jobs, on_cell);
  rep.policy = cfg_.mixsearch.policy;
  rep.selected = mixsearch::select_weights(rep, rep.policy);
  mixsearch::save_report(rep, dir / "report.txt");
  write_text(dir / "heatmap.svg", mixsearch::heatmap_svg(rep));
  std::string csv = "alpha,m_d_mean,m_s_mean,m_total\n";
  for (const auto& c : rep.diagonal()) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%.2f,%.6f,%.6f,%.6f\n", c.alpha, c.m_d_mean, c.m_s_mean, c.m_total);
    csv += buf;
  }
  write_text(dir / "diagonal.csv", csv);
  char buf[96];
  std::snprintf(buf, sizeof(buf), "  selected (%.2f, %.2f)", rep.selected.first, rep.selected.second);
  log(buf);
}

namespace {

augment::GenerateFn generate_with(generator::DenoiserModel& g, std::size_t batch) {
  return [&g, batch](const std::vector<generator::ConditionVector>& c, const std::vector<std::uint64_t>& s) {
    return generator::generate(g, c, s, batch);
  };
}

}  // namespace

void Pipeline::make_aug(const fs::path& dir) {
  const auto orig = manifest("synth-data", "orig");
  auto g = generator_model();
  const auto ls = mixing_classes();
  const auto grid = mixsearch::load_report(stage_dir("grid-search") / "report.txt");
  const std::uint64_t s = stage_seed("make-aug");
  const auto& a = cfg_.auggen;

  augment::AugConfig ac;
  ac.classes = a.classes;
  ac.samples = a.samples;
  ac.rule = mixsearch::preset_weights(mixsearch::parse_weight_preset(a.weights), grid.selected,
                                      derive_seed(s, {tag("weights")}));
  ac.pair_seed = derive_seed(s, {tag("pairs")});
  ac.sample_seed = derive_seed(s, {tag("samples")});
  ac.batch = a.batch;
  // Probe classes come from the same pair order, after the training mixes.
  augment::AugConfig probe = ac;
  probe.classes = a.probe_classes;
  probe.samples = a.probe_samples;
  probe.pair_offset = a.classes;
  probe.sample_seed = derive_seed(s, {tag("probe")});
  ac.validate(ls.size());
  if (a.probe_classes > 0) probe.validate(ls.size());

  const auto gen = generate_with(g, a.batch);
  const auto res = augment::generate_aug(gen, orig.class_count, ls, ac, dir / "aug", cfg_.dataset.format);
  log("  D^aug: " + std::to_string(res.manifest.records.size()) + " images, weights " + ac.rule.describe());
  if (a.probe_classes > 0) augment::generate_aug(gen, orig.class_count, ls, probe, dir / "probe", cfg_.dataset.format);
  write_text(dir / "weights.txt", ac.rule.describe() + "\n");
}

void Pipeline::train_mixed(const fs::path& dir) {
  const auto orig = manifest("synth-data", "orig");
  const auto aug = manifest("make-aug", "aug");
  const auto mixed = dataset::merge(orig, aug);
  const auto& d = cfg_.discriminator;
  std::string keys;
  for (std::uint64_t seed : d.seeds) {
    const std::string sub = seed_dir("mix_s", seed);
    auto on_epoch = [&](const discriminator::CurvePoint& p) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "  %s epoch %d loss %.4f acc %.3f", sub.c_str(), p.epoch, p.loss, p.accuracy);
      log(buf);
    };
    auto m = discriminator::train_discriminator(mixed, d.backbone, d.head, d.schedule, seed, on_epoch);
    discriminator::save_model(m, dir / sub / "model.ckpt");
    m.curve.write_csv(dir / sub / "curve.csv");
    keys += training_key(mixed, cfg_, seed) + '\t' + sub + "/model.ckpt\n";
  }
  write_text(dir / "keys.tsv", keys);
}

void Pipeline::eval(const fs::path& dir) {
  const auto heldout = manifest("synth-data", "heldout");
  std::optional<dataset::DatasetManifest> probe;
  if (cfg_.auggen.probe_classes > 0) probe = manifest("make-aug", "probe");
  auto ec = cfg_.eval.eval;
  ec.seed = stage_seed("eval");

  std::vector<evalbench::EvalReport> reports;
  std::string roc = "model\tseed\tfpr\ttar\n";
  for (std::uint64_t seed : cfg_.discriminator.seeds) {
    for (const char* kind : {"M_orig", "M_mix"}) {
      auto model = std::string(kind) == "M_orig" ? orig_model(seed) : mixed_model(seed);
      auto r = evalbench::evaluate(model, heldout, ec, kind, "heldout");
      r.seed = seed;
      if (probe) r.dynamics = evalbench::feature_dynamics(model, *probe);
      const auto scores =
          evalbench::verification_scores(model, heldout, derive_seed(ec.seed, {tag("pairs")}), ec.pairs);
      for (auto [fpr, tar] : evalbench::roc_curve(scores)) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "\t%.8g\t%.8g\n", fpr, tar);
        roc += std::string(kind) + '\t' + std::to_string(seed) + buf;
      }
      std::string line = "  " + std::string(kind) + " s" + std::to_string(seed);
      for (const auto& p : r.tar) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), " TAR@%s %.4f", evalbench::fpr_key(p.fpr_target).c_str(), p.tar);
        line += buf;
      }
      log(line);
      reports.push_back(std::move(r));
    }
  }
  write_text(dir / "eval.csv", evalbench::eval_csv(reports));
  write_text(dir / "eval.json", evalbench::eval_json(reports));
  write_text(dir / "roc.tsv", roc);
}

void Pipeline::gen_metrics(const fs::path& dir) {
  auto oracle = oracle_model();
  const auto orig = manifest("synth-data", "orig");
  const auto real = evalbench::embed_manifest(oracle, orig);
  std::vector<evalbench::GenMetricsReport> reports;
  for (auto [stage, sub, id] : {std::tuple{"repro", "data", "D^repro"}, std::tuple{"make-aug", "aug", "D^aug"}}) {
    const auto gen = evalbench::embed_manifest(oracle, manifest(stage, sub));
    reports.push_back(evalbench::gen_metrics(real, gen, cfg_.eval.k, "oracle", id));
  }
  write_text(dir / "gen_metrics.csv", evalbench::gen_metrics_csv(reports));
  write_text(dir / "gen_metrics.json", evalbench::gen_metrics_json(reports));
}

void Pipeline::report(const fs::path& dir) {
  ReportInputs in;
  in.eval = evalbench::eval_from_json(read_text(stage_dir("eval") / "eval.json"));
  in.gen = evalbench::gen_metrics_from_json(read_text(stage_dir("gen-metrics") / "gen_metrics.json"));
  in.grid = mixsearch::load_report(stage_dir("grid-search") / "report.txt");
  in.orig_count = static_cast<long>(manifest("synth-data", "orig").records.size());
  in.aug_count = static_cast<long>(manifest("make-aug", "aug").records.size());
  in.fpr_targets = cfg_.eval.eval.fpr_targets;
  in.benchmark = cfg_.eval.eval.benchmark;
  in.fidelity = Json::parse(read_text(stage_dir("repro") / "fidelity.json")).at("oracle_accuracy").get<double>();
  in.weights = read_text(stage_dir("make-aug") / "weights.txt");
  in.roc_tsv = read_text(stage_dir("eval") / "roc.tsv");
  for (std::uint64_t s : cfg_.discriminator.seeds) {
    in.curves.push_back({"M_orig s" + std::to_string(s),
                         read_text(stage_dir("train-disc") / seed_dir("orig_s", s) / "curve.csv")});
    in.curves.push_back({"M_mix s" + std::to_string(s),
                         read_text(stage_dir("train-mixed") / seed_dir("mix_s", s) / "curve.csv")});
  }
  in.generator_curve = read_text(stage_dir("train-gen") / "curve.csv");
  write_report(in, opts_.formats, dir);
}

}  // namespace auggen::pipeline
