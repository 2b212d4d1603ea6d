#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "auggen/dataset/image_io.hpp"
#include "auggen/dataset/toy.hpp"
#include "auggen/discriminator/model.hpp"
#include "auggen/evalbench/evaluate.hpp"
#include "auggen/generator/model.hpp"
#include "auggen/mixsearch/search.hpp"

namespace auggen::pipeline {

using Json = nlohmann::ordered_json;

struct DatasetSection {
  dataset::ToyIdentitySpec toy;  // num_classes / samples_per_class describe D^orig
  int heldout_classes = 16;      // verification identities, never trained on
  int heldout_samples = 20;
  int extra_classes = 8;         // spare real identities for real-vs-synth
  int oracle_samples = 200;      // fresh clean images per D^orig class for the oracle
  std::string ls_policy = "all";
  dataset::ImageFormat format = dataset::ImageFormat::raw;
};

struct DiscriminatorSection {
  discriminator::BackboneConfig backbone;
  discriminator::MarginHeadConfig head;
  discriminator::TrainSchedule schedule;
  std::vector<std::uint64_t> seeds{41};  // one M_orig / M_mix pair per seed
};

// Clean-data classifier used as feature extractor and fidelity judge.
struct OracleSection {
  discriminator::BackboneConfig backbone;
  discriminator::MarginHeadConfig head;
  discriminator::TrainSchedule schedule;
};

struct ReproSection {
  int samples_per_class = 50;
};

struct MixsearchSection {
  mixsearch::GridSpec grid;  // seed comes from the seed tree
  mixsearch::SelectionPolicy policy = mixsearch::SelectionPolicy::diagonal;
};

struct AuggenSection {
  int classes = 16;
  int samples = 20;
  std::string weights = "half_plus_plus";  // half | full | random | half_plus_plus
  int probe_classes = 8;           // mixed classes held out for feature dynamics
  int probe_samples = 10;
  std::size_t batch = 32;
};

struct EvalSection {
  evalbench::EvalConfig eval;  // seed comes from the seed tree
  int k = 3;                   // generative metrics neighbourhood
};

struct PresetSection {
  std::vector<std::uint64_t> seeds{41, 2048, 10};
  std::vector<int> sweep_classes{8, 16};
  std::vector<int> sweep_samples{5, 20};
  std::vector<std::pair<int, int>> real_vs_synth_aug{{8, 20}, {16, 20}};
  std::vector<int> real_vs_synth_extra{4, 8};  // added real identities per row
  std::vector<std::pair<double, double>> correlation_weights{{0.3, 0.3}, {0.5, 0.5}, {0.7, 0.7}, {1.0, 1.0}};
};

struct PipelineConfig {
  std::uint64_t seed = 41;
  std::filesystem::path out = "runs/default";
  DatasetSection dataset;
  DiscriminatorSection discriminator;
  OracleSection oracle;
  generator::GeneratorConfig generator;
  ReproSection repro;
  MixsearchSection mixsearch;
  AuggenSection auggen;
  EvalSection eval;
  PresetSection presets;
  std::vector<std::string> skip;  // run-all leaves these stages out

  PipelineConfig();  // the 8-class toy defaults

  void validate() const;
  // Every key, defaults filled in. "out" is left out: it does not change results.
  Json to_json() const;
  static PipelineConfig from_json(const Json& j);  // unknown keys are errors
  // Compact dump of to_json(); whitespace in the source file never matters.
  std::string canonical() const;
  std::string hash() const;  // sha256 of canonical()
};

PipelineConfig load_config(const std::filesystem::path& file);

}  // namespace auggen::pipeline
