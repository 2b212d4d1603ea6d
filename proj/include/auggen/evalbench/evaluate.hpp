#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "auggen/dataset/manifest.hpp"
#include "auggen/discriminator/model.hpp"
#include "auggen/evalbench/metrics.hpp"

namespace auggen::evalbench {

using Pair = std::pair<std::size_t, std::size_t>;  // row indices, first < second

struct PairCounts {
  int max_genuine_per_identity = 0;  // 0: every within-identity pair
  std::size_t impostor = 0;          // 0: as many as genuine pairs
};

struct PairList {
  std::vector<Pair> genuine;
  std::vector<Pair> impostor;
  std::vector<std::string> warnings;
};

// Genuine pairs per identity (sampled when capped), impostor pairs drawn
// without replacement across identities, or all of them when fewer exist.
PairList draw_verification_pairs(const std::vector<int>& labels, std::uint64_t seed, const PairCounts& counts);

// Cosine of unit rows for every listed pair.
ScoreSet score_pairs(const Features& feats, const PairList& pairs);

// Unit embeddings of every record, rows in record order.
Features embed_manifest(discriminator::EmbeddingModel& model, const dataset::DatasetManifest& manifest,
                        std::vector<int>* labels = nullptr);

// `exclude`, when given, must share no sample with the held-out set.
ScoreSet verification_scores(discriminator::EmbeddingModel& model, const dataset::DatasetManifest& heldout,
                             std::uint64_t seed, const PairCounts& counts, std::vector<std::string>* warnings = nullptr,
                             const dataset::DatasetManifest* exclude = nullptr);

// Lowest sample id per identity goes to the gallery, the rest are probes.
std::pair<dataset::DatasetManifest, dataset::DatasetManifest> gallery_probe_split(const dataset::DatasetManifest& m);

double rank1(discriminator::EmbeddingModel& model, const dataset::DatasetManifest& gallery,
             const dataset::DatasetManifest& probes);

FeatureDynamics feature_dynamics(discriminator::EmbeddingModel& model, const dataset::DatasetManifest& manifest);

struct EvalConfig {
  std::vector<double> fpr_targets{1e-1, 1e-2, 1e-3};
  int folds = 10;
  PairCounts pairs{0, 10000};
  std::uint64_t seed = 0;
  std::string benchmark = "B";  // column prefix: "B-1e-2"

  void validate() const;
};

struct EvalReport {
  std::string model_id;
  std::string dataset_id;
  std::uint64_t seed = 0;
  std::string benchmark = "B";
  std::vector<TarPoint> tar;
  CvAccuracy cv;
  std::optional<double> rank1;
  std::optional<FeatureDynamics> dynamics;
  std::size_t genuine_pairs = 0;
  std::size_t impostor_pairs = 0;
  std::vector<std::string> warnings;

  std::optional<double> tar_at(double fpr) const;
};

// TAR, cross-validated accuracy and rank-1 on one held-out set.
EvalReport evaluate(discriminator::EmbeddingModel& model, const dataset::DatasetManifest& heldout,
                    const EvalConfig& cfg, const std::string& model_id, const std::string& dataset_id);

// All reports must share the same FPR targets and benchmark prefix.
std::string eval_csv(const std::vector<EvalReport>& reports);
std::string eval_json(const std::vector<EvalReport>& reports);
std::vector<EvalReport> eval_from_json(const std::string& text);

struct GenMetricsReport {
  double fd = 0;
  double precision = 0;
  double recall = 0;
  double coverage = 0;
  int k = 3;
  std::string extractor_id;
  std::string dataset_id;
  std::size_t real_count = 0;
  std::size_t gen_count = 0;
};

GenMetricsReport gen_metrics(const Features& real, const Features& gen, int k, const std::string& extractor_id,
                             const std::string& dataset_id);

std::string gen_metrics_csv(const std::vector<GenMetricsReport>& reports);
std::string gen_metrics_json(const std::vector<GenMetricsReport>& reports);
std::vector<GenMetricsReport> gen_metrics_from_json(const std::string& text);

// ROC points (fpr, tar) at every distinct impostor threshold, for plotting.
std::vector<std::pair<double, double>> roc_curve(const ScoreSet& scores, std::size_t max_points = 200);

}  // namespace auggen::evalbench
