#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "auggen/dataset/manifest.hpp"
#include "auggen/discriminator/head.hpp"
#include "auggen/numerics/layers.hpp"
#include "auggen/numerics/optimizer.hpp"

namespace auggen::discriminator {

using numerics::ParameterSet;
using numerics::Tensor;

// Three conv/GN/SiLU/pool stages (width, 2*width, 4*width channels) and a
// linear projection onto the unit sphere.
struct BackboneConfig {
  int image_size = 32;
  int channels = 1;
  int width = 16;
  int embedding_dim = 64;

  void validate() const;
};

struct Embedding {
  std::vector<float> e;  // unit norm
  float norm = 0;        // length before normalization
};

struct CurvePoint {
  int epoch = 0;
  double learning_rate = 0;
  double loss = 0;      // mean over the epoch's steps
  double accuracy = 0;  // fraction of augmented training samples classified correctly
};

struct TrainingCurve {
  double initial_loss = 0;  // full pass over the clean training set before step 0
  double final_loss = 0;    // same pass after the last step
  double final_accuracy = 0;
  std::vector<CurvePoint> epochs;

  void write_csv(const std::filesystem::path& file) const;
};

class EmbeddingModel {
 public:
  EmbeddingModel() = default;
  EmbeddingModel(BackboneConfig backbone, int class_count, MarginHeadConfig head, std::uint64_t seed);

  const BackboneConfig& backbone_config() const { return backbone_cfg_; }
  const MarginHeadConfig& head_config() const { return head_cfg_; }
  int class_count() const { return class_count_; }
  int embedding_dim() const { return backbone_cfg_.embedding_dim; }

  // [B, C, H, W] -> [B, d] unit rows; norms receives the pre-normalization lengths.
  Tensor embed_batch(const Tensor& images, std::vector<float>* norms = nullptr);
  Embedding embed(const Tensor& image);  // image [C, H, W]
  // Embeddings of many images, batched internally. Rows follow `images`.
  Tensor embed_all(const std::vector<Tensor>& images, std::size_t chunk = 256);

  // Cosine logits with the configured margin applied to `target`.
  std::vector<double> logits(const Embedding& e, int target);
  // Class with the largest head cosine, per image.
  std::vector<int> predict(const std::vector<Tensor>& images);

  numerics::ParamList<float> parameters();
  ParameterSet snapshot();
  void load(const ParameterSet& set);

  numerics::Sequential<float>& backbone() { return backbone_; }
  numerics::Parameter<float>& head_weight() { return head_weight_; }
  AdafaceStats& adaface_stats() { return ada_; }
  const AdafaceStats& adaface_stats() const { return ada_; }

  TrainingCurve curve;

 private:
  BackboneConfig backbone_cfg_;
  MarginHeadConfig head_cfg_;
  int class_count_ = 0;
  numerics::Sequential<float> backbone_;
  numerics::Parameter<float> head_weight_;
  AdafaceStats ada_;
};

struct TrainSchedule {
  int epochs = 26;
  int batch_size = 64;
  int grad_accum_steps = 1;
  numerics::SgdConfig sgd{0.02, 0.9, 5e-4, {12, 24, 26}, 0.1, 1};  // lr scaled to batch 64
  bool brightness_jitter = true;
  double brightness = 0.1;
  bool random_crop = true;
  int crop_padding = 2;

  void validate() const;
};

// Called after every epoch with the point just recorded.
using EpochCallback = std::function<void(const CurvePoint&)>;

// Empirical risk minimization of the margin-softmax loss over `train`.
// Deterministic in (inputs, seed). Throws NumericalError on divergence.
EmbeddingModel train_discriminator(const dataset::DatasetManifest& train, const BackboneConfig& backbone,
                                   const MarginHeadConfig& head, const TrainSchedule& schedule,
                                   std::uint64_t seed, const EpochCallback& on_epoch = {});
EmbeddingModel train_discriminator(const dataset::LabeledImages& data, int class_count,
                                   const BackboneConfig& backbone, const MarginHeadConfig& head,
                                   const TrainSchedule& schedule, std::uint64_t seed,
                                   const EpochCallback& on_epoch = {});

// Mean margin loss and raw-cosine accuracy over a labeled set, no augmentation.
struct EvalLoss {
  double loss = 0;
  double accuracy = 0;
};
EvalLoss evaluate_loss(EmbeddingModel& model, const dataset::LabeledImages& data);

// Parameters go to `file` as a checkpoint; configs, class count and norm
// statistics go to `file` + ".json".
void save_model(EmbeddingModel& model, const std::filesystem::path& file);
EmbeddingModel load_model(const std::filesystem::path& file);

}  // namespace auggen::discriminator
