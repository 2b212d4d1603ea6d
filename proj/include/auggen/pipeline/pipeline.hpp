#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "auggen/dataset/manifest.hpp"
#include "auggen/discriminator/model.hpp"
#include "auggen/generator/model.hpp"
#include "auggen/pipeline/config.hpp"
#include "auggen/pipeline/ledger.hpp"

namespace auggen::pipeline {

// Execution order of run-all.
const std::vector<std::string>& stage_names();
const std::vector<std::string>& preset_names();
bool is_stage(const std::string& name);
bool is_preset(const std::string& name);

struct RunOptions {
  int jobs = 1;  // grid-search workers; results do not depend on it
  std::vector<std::string> formats{"csv", "txt", "svg"};
  std::function<void(const std::string&)> log;  // progress lines, may be empty
};

struct StageOutcome {
  std::string stage;
  bool cache_hit = false;
  double wall_seconds = 0;
  std::string outputs_hash;
};

// Artifact layout under the run root:
//   synth-data/{orig,heldout,extra,oracle}/manifest.tsv
//   train-disc/orig_s<seed>/model.ckpt, train-disc/oracle/model.ckpt
//   train-gen/generator.ckpt        repro/data/, repro/fidelity.json
//   grid-search/report.txt          make-aug/{aug,probe}/
//   train-mixed/mix_s<seed>/        eval/eval.{csv,json}, eval/dynamics.csv
//   gen-metrics/gen_metrics.{csv,json}
//   report/                         presets/<name>/
// Every stage directory carries a stage.json stamp; ledger.jsonl sits at the root.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg, RunOptions opts = {});
  ~Pipeline();
  Pipeline(Pipeline&&) noexcept;

  // Runs one stage. Upstream stages must be present and current, otherwise
  // UpstreamMissing names the command that produces them.
  StageOutcome run_stage(const std::string& name);
  // Every stage in order, except those in config.skip.
  std::vector<StageOutcome> run_all();
  // Preset experiment over the current base artifacts.
  StageOutcome run_preset(const std::string& name);

  const PipelineConfig& config() const { return cfg_; }
  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path stage_dir(const std::string& name) const { return root_ / name; }
  std::uint64_t stage_seed(const std::string& name) const;

  // Outputs hash of a stage that is present and current, else empty.
  std::optional<std::string> fresh_outputs(const std::string& name);

  // Artifact accessors, valid once the producing stage has run.
  dataset::DatasetManifest manifest(const std::string& stage, const std::string& sub) const;
  discriminator::EmbeddingModel orig_model(std::uint64_t seed) const;
  discriminator::EmbeddingModel mixed_model(std::uint64_t seed) const;
  discriminator::EmbeddingModel oracle_model() const;
  generator::DenoiserModel generator_model() const;
  std::vector<int> mixing_classes() const;  // L_s of D^orig

  // Trains on `train` with the configured discriminator, reusing any model
  // already trained on identical data and seed (run stages or `cache_dir`).
  discriminator::EmbeddingModel train_cached(const dataset::DatasetManifest& train, std::uint64_t seed,
                                             const std::filesystem::path& cache_dir);

  void log(const std::string& msg) const;

 private:
  struct StageDef;
  const StageDef& def(const std::string& name) const;
  std::string expected_inputs(const StageDef& d);
  StageOutcome execute(const StageDef& d);

  void synth_data(const std::filesystem::path& dir);
  void train_disc(const std::filesystem::path& dir);
  void train_gen(const std::filesystem::path& dir);
  void repro(const std::filesystem::path& dir);
  void grid_search(const std::filesystem::path& dir);
  void make_aug(const std::filesystem::path& dir);
  void train_mixed(const std::filesystem::path& dir);
  void eval(const std::filesystem::path& dir);
  void gen_metrics(const std::filesystem::path& dir);
  void report(const std::filesystem::path& dir);
  void preset_weighting(const std::filesystem::path& dir);
  void preset_mixing(const std::filesystem::path& dir);
  void preset_real_vs_synth(const std::filesystem::path& dir);
  void preset_correlation(const std::filesystem::path& dir);

  PipelineConfig cfg_;
  RunOptions opts_;
  std::filesystem::path root_;
  std::vector<StageDef> defs_;
  std::map<std::string, std::string> verified_;  // stage -> outputs hash, checked this session
};

// Key of a training run: record ids, labels and image bytes, discriminator
// settings, seed and code version.
std::string training_key(const dataset::DatasetManifest& train, const PipelineConfig& cfg, std::uint64_t seed);

}  // namespace auggen::pipeline
