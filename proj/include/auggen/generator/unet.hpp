#pragma once

#include <span>
#include <utility>

#include "auggen/numerics/layers.hpp"

namespace auggen::generator {

using numerics::BasicTensor;
using numerics::ParamList;
using numerics::Rng;

struct UNetConfig {
  int image_size = 32;  // multiple of 4
  int channels = 1;
  int base_channels = 16;
  int emb_dim = 64;
  int fourier_dim = 16;
  int groups = 4;
  int class_count = 2;

  void validate() const;
};

// Class embedding without bias: out[b] = sum_k c[b, k] * W[k]. Exactly
// linear in c, so condition mixing acts in embedding space.
template <typename Real>
class ConditionEmbedding {
 public:
  ConditionEmbedding() = default;
  ConditionEmbedding(std::string name, std::size_t classes, std::size_t dim, Rng& rng);
  BasicTensor<Real> forward(const BasicTensor<Real>& c);  // [B, classes] -> [B, dim]
  void backward(const BasicTensor<Real>& dy);
  void collect(ParamList<Real>& out) { out.push_back(&weight_); }
  numerics::Parameter<Real>& weight() { return weight_; }

 private:
  numerics::Parameter<Real> weight_;
  BasicTensor<Real> input_;
};

// GN -> SiLU -> conv3 -> + per-channel embedding bias -> GN -> SiLU -> conv3,
// added to a (1x1-projected when channels change) skip, scaled by 1/sqrt(2).
template <typename Real>
class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(const std::string& name, std::size_t cin, std::size_t cout, std::size_t emb_dim, std::size_t groups,
           Rng& rng);
  BasicTensor<Real> forward(const BasicTensor<Real>& x, const BasicTensor<Real>& emb);
  // Returns (d input, d emb).
  std::pair<BasicTensor<Real>, BasicTensor<Real>> backward(const BasicTensor<Real>& dy);
  void collect(ParamList<Real>& out);

 private:
  numerics::GroupNorm<Real> gn1_, gn2_;
  numerics::SiLU<Real> act1_, act2_;
  numerics::Conv2d<Real> conv1_, conv2_, skip_;
  numerics::Linear<Real> emb_proj_;
  bool has_skip_ = false;
};

// Two-level U-Net denoiser body F(x; c_noise, c).
//   S: conv_in -> rb0 (ch) ----------------------------- concat -> rb5 -> out
//   S/2:          pool -> rb1 (2ch) --------- concat -> rb4 -> up
//   S/4:                 pool -> rb2 -> rb3 -> up
// Noise level enters as Fourier features of c_noise; the class condition
// through ConditionEmbedding; their sum feeds a 2-layer SiLU MLP whose output
// biases every residual block.
template <typename Real>
class UNet {
 public:
  UNet() = default;
  UNet(const UNetConfig& cfg, Rng& rng);

  // x: [B, C, S, S]; c_noise: [B]; cond: [B, class_count].
  BasicTensor<Real> forward(const BasicTensor<Real>& x, std::span<const Real> c_noise, const BasicTensor<Real>& cond);
  // Accumulates parameter grads; returns d x.
  BasicTensor<Real> backward(const BasicTensor<Real>& dy);
  ParamList<Real> parameters();
  const UNetConfig& config() const { return cfg_; }

  // Embedding of the class condition alone (first, linear stage).
  BasicTensor<Real> condition_embedding(const BasicTensor<Real>& cond) { return cond_.forward(cond); }

 private:
  UNetConfig cfg_;
  ConditionEmbedding<Real> cond_;
  numerics::Linear<Real> noise_proj_, mlp_;
  numerics::SiLU<Real> mlp_act0_, mlp_act1_;
  numerics::Conv2d<Real> conv_in_, conv_out_;
  ResBlock<Real> rb0_, rb1_, rb2_, rb3_, rb4_, rb5_;
  numerics::AvgPool2d<Real> pool0_, pool1_;
  numerics::NearestUpsample<Real> up0_, up1_;
  numerics::GroupNorm<Real> gn_out_;
  numerics::SiLU<Real> act_out_;
  std::size_t up_channels_ = 0;  // channels of both upsampled paths
};

// Sinusoidal features of c_noise: [cos(f_k x), sin(f_k x)], f_k geometric
// in [0.5, 16].
template <typename Real>
BasicTensor<Real> fourier_features(std::span<const Real> c_noise, std::size_t dim);

}  // namespace auggen::generator
