#pragma once

#include <span>
#include <string>
#include <vector>

#include "auggen/numerics/tensor.hpp"

namespace auggen::discriminator {

using numerics::BasicTensor;

enum class HeadVariant { plain_softmax, cosface, arcface, adaface };
std::string to_string(HeadVariant v);
HeadVariant parse_head_variant(const std::string& s);

struct MarginHeadConfig {
  HeadVariant variant = HeadVariant::arcface;
  double margin = 0.5;
  double scale = 16.0;
  // AdaFace only: feature-norm concentration h and the momentum of the
  // running norm mean/std.
  double adaface_h = 0.333;
  double adaface_momentum = 0.01;

  void validate() const;
};

// Running feature-norm statistics for the AdaFace margin. Seeded from the
// first batch, then blended with `momentum` per step.
struct AdafaceStats {
  double mean = 0;
  double std = 1;
  bool initialized = false;

  void update(std::span<const double> norms, double momentum);
  // clamp(h * (norm - mean) / (std + eps), -1, 1)
  double scaler(double norm, double h) const;
};

template <typename Real>
struct TargetLogit {
  Real value = 0;  // scaled logit
  Real dcos = 0;   // d value / d cos(theta)
};

// Target-class logit for one cosine. Non-target classes always get s*cos.
//   plain_softmax: s*cos            cosface: s*(cos - m)
//   arcface: s*cos(theta + m), with theta + m clamped to pi
//   adaface: s*(cos(theta - m*z) - m - m*z), z the norm scaler in [-1, 1],
//            theta - m*z clamped to [eps, pi - eps]
// z is treated as a constant for differentiation.
template <typename Real>
TargetLogit<Real> target_logit(Real cosine, const MarginHeadConfig& cfg, Real norm_scaler = 0);

// Logits for one embedding given its class cosines.
std::vector<double> margin_logits(std::span<const double> cosines, int target,
                                  const MarginHeadConfig& cfg, double norm_scaler = 0);

template <typename Real>
struct HeadResult {
  Real loss = 0;                   // mean cross-entropy over the batch
  std::size_t correct = 0;         // argmax of raw cosines equals the label
  BasicTensor<Real> d_embeddings;  // [B, d]
  BasicTensor<Real> d_weight;      // [C, d], w.r.t. the unnormalized weight
};

// Margin-softmax cross-entropy. embeddings: [B, d] (unit rows); weight:
// [C, d], normalized per row inside. norm_scalers is empty unless the head is
// adaface, in which case it holds one scaler per row.
template <typename Real>
HeadResult<Real> margin_head_loss(const BasicTensor<Real>& embeddings,
                                  const BasicTensor<Real>& weight, std::span<const int> labels,
                                  const MarginHeadConfig& cfg,
                                  std::span<const Real> norm_scalers = {});

// Cosine similarity. Inputs are renormalized in double, so float rounding of
// unit vectors does not leak into the measure.
double m_s(std::span<const float> e1, std::span<const float> e2);
// 1 - |cos|: antipodal embeddings count as similar.
double m_d(std::span<const float> e1, std::span<const float> e2);

}  // namespace auggen::discriminator
