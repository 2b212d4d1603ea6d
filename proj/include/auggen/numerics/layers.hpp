#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "auggen/numerics/parameter.hpp"
#include "auggen/numerics/rng.hpp"
#include "auggen/numerics/tensor.hpp"

// Hand-differentiated layers. Each layer caches what its backward pass needs
// during forward, and backward accumulates into the owned parameter grads.
// Activations are NCHW for spatial layers and [batch, features] for dense.
namespace auggen::numerics {

template <typename Real>
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, std::size_t in, std::size_t out, Rng& rng, bool bias = true);

  BasicTensor<Real> forward(const BasicTensor<Real>& x);
  BasicTensor<Real> backward(const BasicTensor<Real>& dy);
  void collect(ParamList<Real>& out);

  const std::string& name() const { return name_; }
  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  Parameter<Real>& weight() { return weight_; }
  Parameter<Real>& bias() { return bias_; }

 private:
  std::string name_;
  std::size_t in_ = 0, out_ = 0;
  bool use_bias_ = true;
  Parameter<Real> weight_, bias_;
  BasicTensor<Real> input_;
};

// Square kernel, stride 1, "same" zero padding (kernel must be odd).
template <typename Real>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels,
         std::size_t kernel, Rng& rng);

  BasicTensor<Real> forward(const BasicTensor<Real>& x);
  BasicTensor<Real> backward(const BasicTensor<Real>& dy);
  void collect(ParamList<Real>& out);

  const std::string& name() const { return name_; }
  Parameter<Real>& weight() { return weight_; }
  Parameter<Real>& bias() { return bias_; }

 private:
  std::string name_;
  std::size_t cin_ = 0, cout_ = 0, k_ = 0;
  Parameter<Real> weight_, bias_;
  BasicTensor<Real> input_;
};

template <typename Real>
class SiLU {
 public:
  SiLU() = default;
  explicit SiLU(std::string name) : name_(std::move(name)) {}
  BasicTensor<Real> forward(const BasicTensor<Real>& x);
  BasicTensor<Real> backward(const BasicTensor<Real>& dy);
  void collect(ParamList<Real>&) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_ = "silu";
  BasicTensor<Real> input_;
};

template <typename Real>
class GroupNorm {
 public:
  GroupNorm() = default;
  GroupNorm(std::string name, std::size_t groups, std::size_t channels, Real eps = Real(1e-5));

  BasicTensor<Real> forward(const BasicTensor<Real>& x);
  BasicTensor<Real> backward(const BasicTensor<Real>& dy);
  void collect(ParamList<Real>& out);
  const std::string& name() const { return name_; }
  Parameter<Real>& gamma() { return gamma_; }
  Parameter<Real>& beta() { return beta_; }

 private:
  std::string name_;
  std::size_t groups_ = 1, channels_ = 0;
  Real eps_ = Real(1e-5);
  Parameter<Real> gamma_, beta_;
  BasicTensor<Real> xhat_;
  std::vector<Real> inv_std_;  // [batch * groups]
};

// 2x2 average pooling, stride 2.
template <typename Real>
class AvgPool2d {
 public:
  AvgPool2d() = default;
  explicit AvgPool2d(std::string name) : name_(std::move(name)) {}
  BasicTensor<Real> forward(const BasicTensor<Real>& x);
  BasicTensor<Real> backward(const BasicTensor<Real>& dy);
  void collect(ParamList<Real>&) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_ = "avgpool";
  Shape in_shape_;
};

// Nearest-neighbour 2x upsampling.
template <typename Real>
class NearestUpsample {
 public:
  NearestUpsample() = default;
  explicit NearestUpsample(std::string name) : name_(std::move(name)) {}
  BasicTensor<Real> forward(const BasicTensor<Real>& x);
  BasicTensor<Real> backward(const BasicTensor<Real>& dy);
  void collect(ParamList<Real>&) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_ = "upsample";
  Shape in_shape_;
};

// Nearest-neighbour 2x downsampling (keeps the top-left pixel of each 2x2 cell).
template <typename Real>
class NearestDownsample {
 public:
  NearestDownsample() = default;
  explicit NearestDownsample(std::string name) : name_(std::move(name)) {}
  BasicTensor<Real> forward(const BasicTensor<Real>& x);
  BasicTensor<Real> backward(const BasicTensor<Real>& dy);
  void collect(ParamList<Real>&) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_ = "downsample";
  Shape in_shape_;
};

// [B, ...] -> [B, prod(...)].
template <typename Real>
class Flatten {
 public:
  Flatten() = default;
  explicit Flatten(std::string name) : name_(std::move(name)) {}
  BasicTensor<Real> forward(const BasicTensor<Real>& x);
  BasicTensor<Real> backward(const BasicTensor<Real>& dy);
  void collect(ParamList<Real>&) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_ = "flatten";
  Shape in_shape_;
};

// Row-wise projection onto the unit sphere. Keeps the pre-normalization norms.
template <typename Real>
class L2Normalize {
 public:
  L2Normalize() = default;
  explicit L2Normalize(std::string name) : name_(std::move(name)) {}
  BasicTensor<Real> forward(const BasicTensor<Real>& x);
  BasicTensor<Real> backward(const BasicTensor<Real>& dy);
  void collect(ParamList<Real>&) {}
  const std::string& name() const { return name_; }
  const std::vector<Real>& norms() const { return norms_; }

 private:
  std::string name_ = "l2norm";
  BasicTensor<Real> output_;
  std::vector<Real> norms_;
};

template <typename Real>
struct LossResult {
  Real loss = 0;
  BasicTensor<Real> grad;  // d loss / d input
};

// Mean softmax cross-entropy over the batch. logits: [B, classes].
template <typename Real>
LossResult<Real> softmax_cross_entropy(const BasicTensor<Real>& logits,
                                       std::span<const int> labels);

// Number of rows whose argmax equals the label.
template <typename Real>
std::size_t count_correct(const BasicTensor<Real>& logits, std::span<const int> labels);

template <typename Real>
using AnyLayer = std::variant<Linear<Real>, Conv2d<Real>, SiLU<Real>, GroupNorm<Real>,
                              AvgPool2d<Real>, NearestUpsample<Real>, NearestDownsample<Real>,
                              Flatten<Real>, L2Normalize<Real>>;

// A linear chain of layers. Every intermediate activation is checked for
// finiteness so a blow-up names the layer that produced it.
template <typename Real>
class Sequential {
 public:
  template <typename Layer>
  Layer& add(Layer layer) {
    layers_.emplace_back(std::move(layer));
    return std::get<Layer>(layers_.back());
  }

  BasicTensor<Real> forward(const BasicTensor<Real>& x);
  BasicTensor<Real> backward(const BasicTensor<Real>& dy);
  ParamList<Real> parameters();
  void zero_grad();
  std::size_t depth() const { return layers_.size(); }
  AnyLayer<Real>& layer(std::size_t i) { return layers_.at(i); }

 private:
  std::vector<AnyLayer<Real>> layers_;
};

// Loss functions accepted by forward_backward.
struct SoftmaxCrossEntropyLoss {
  std::vector<int> labels;
};
struct SumLoss {};  // loss = sum of all outputs
template <typename Real>
struct MeanSquaredErrorLoss {
  BasicTensor<Real> target;  // loss = sum((y - t)^2) / batch
};
template <typename Real>
using LossSpec = std::variant<SoftmaxCrossEntropyLoss, SumLoss, MeanSquaredErrorLoss<Real>>;

// Runs forward, evaluates the loss, and backpropagates into every parameter
// grad (accumulating; callers zero grads between steps).
template <typename Real>
Real forward_backward(Sequential<Real>& model, const BasicTensor<Real>& batch,
                      const LossSpec<Real>& loss);

}  // namespace auggen::numerics
