#include "auggen/discriminator/head.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace auggen::discriminator {

std::string to_string(HeadVariant v) {
  switch (v) {
    case HeadVariant::plain_softmax: return "plain_softmax";
    case HeadVariant::cosface: return "cosface";
    case HeadVariant::arcface: return "arcface";
    case HeadVariant::adaface: return "adaface";
  }
  return "?";
}

HeadVariant parse_head_variant(const std::string& s) {
  if (s == "plain_softmax" || s == "softmax") return HeadVariant::plain_softmax;
  if (s == "cosface") return HeadVariant::cosface;
  if (s == "arcface") return HeadVariant::arcface;
  if (s == "adaface") return HeadVariant::adaface;
  throw InvalidArgument("unknown head variant: " + s);
}

void MarginHeadConfig::validate() const {
  if (!std::isfinite(margin) || margin < 0) throw InvalidArgument("head: margin must be finite and >= 0");
  if (!std::isfinite(scale) || scale <= 0) throw InvalidArgument("head: scale must be finite and > 0");
  if (variant == HeadVariant::arcface && margin >= std::numbers::pi / 2) {
    throw InvalidArgument("head: arcface margin must be < pi/2");
  }
  if (variant == HeadVariant::adaface) {
    if (!(adaface_momentum > 0 && adaface_momentum <= 1)) {
      throw InvalidArgument("head: adaface momentum must be in (0, 1]");
    }
    if (!(adaface_h > 0) || !std::isfinite(adaface_h)) throw InvalidArgument("head: adaface h must be > 0");
  }
}

void AdafaceStats::update(std::span<const double> norms, double momentum) {
  if (norms.empty()) return;
  double mu = 0;
  for (double n : norms) mu += n;
  mu /= static_cast<double>(norms.size());
  double var = 0;
  for (double n : norms) var += (n - mu) * (n - mu);
  const double sd = norms.size() > 1 ? std::sqrt(var / static_cast<double>(norms.size() - 1)) : 0.0;
  if (!initialized) {
    mean = mu;
    std = sd;
    initialized = true;
  } else {
    mean = (1 - momentum) * mean + momentum * mu;
    std = (1 - momentum) * std + momentum * sd;
  }
}

double AdafaceStats::scaler(double norm, double h) const {
  constexpr double kEps = 1e-3;
  return std::clamp(h * (norm - mean) / (std + kEps), -1.0, 1.0);
}

template <typename Real>
TargetLogit<Real> target_logit(Real cosine, const MarginHeadConfig& cfg, Real norm_scaler) {
  const Real s = static_cast<Real>(cfg.scale);
  const Real m = static_cast<Real>(cfg.margin);
  if (cfg.variant == HeadVariant::plain_softmax || m == Real(0)) {
    return {s * cosine, s};
  }
  if (cfg.variant == HeadVariant::cosface) return {s * (cosine - m), s};

  // Keep acos away from its singular endpoints; the derivative is zero
  // wherever the cosine was clamped.
  constexpr Real kLimit = Real(1) - Real(1e-6);
  const bool clamped = cosine > kLimit || cosine < -kLimit;
  const Real c = std::clamp(cosine, -kLimit, kLimit);
  const Real theta = std::acos(c);
  const Real sin_theta = std::sqrt(Real(1) - c * c);
  const Real pi = std::numbers::pi_v<Real>;

  if (cfg.variant == HeadVariant::arcface) {
    const Real angle = theta + m;
    if (angle >= pi) return {-s, Real(0)};
    return {s * std::cos(angle), clamped ? Real(0) : s * std::sin(angle) / sin_theta};
  }

  // adaface
  constexpr Real kAngleEps = Real(1e-3);
  const Real z = norm_scaler;
  const Real raw = theta - m * z;
  const Real angle = std::clamp(raw, kAngleEps, pi - kAngleEps);
  const Real value = s * (std::cos(angle) - m - m * z);
  const bool angle_clamped = raw != angle;
  return {value, (clamped || angle_clamped) ? Real(0) : s * std::sin(angle) / sin_theta};
}

std::vector<double> margin_logits(std::span<const double> cosines, int target,
                                  const MarginHeadConfig& cfg, double norm_scaler) {
  if (target < 0 || static_cast<std::size_t>(target) >= cosines.size()) {
    throw InvalidArgument("margin_logits: target class out of range");
  }
  std::vector<double> out(cosines.size());
  for (std::size_t k = 0; k < cosines.size(); ++k) out[k] = cfg.scale * cosines[k];
  out[static_cast<std::size_t>(target)] =
      target_logit<double>(cosines[static_cast<std::size_t>(target)], cfg, norm_scaler).value;
  return out;
}

template <typename Real>
HeadResult<Real> margin_head_loss(const BasicTensor<Real>& embeddings, const BasicTensor<Real>& weight,
                                  std::span<const int> labels, const MarginHeadConfig& cfg,
                                  std::span<const Real> norm_scalers) {
  if (embeddings.rank() != 2 || weight.rank() != 2 || embeddings.dim(1) != weight.dim(1)) {
    throw ShapeError("margin head: embeddings " + numerics::shape_string(embeddings.shape()) +
                     " incompatible with weight " + numerics::shape_string(weight.shape()));
  }
  const std::size_t batch = embeddings.dim(0), dim = embeddings.dim(1), classes = weight.dim(0);
  if (labels.size() != batch) throw ShapeError("margin head: label count differs from batch");
  const bool ada = cfg.variant == HeadVariant::adaface;
  if (ada && norm_scalers.size() != batch) throw ShapeError("margin head: adaface needs one norm scaler per row");

  std::vector<Real> wnorm(classes);
  BasicTensor<Real> wn(weight.shape());
  for (std::size_t k = 0; k < classes; ++k) {
    Real n2 = 0;
    for (std::size_t i = 0; i < dim; ++i) n2 += weight[k * dim + i] * weight[k * dim + i];
    wnorm[k] = std::sqrt(n2);
    if (!(wnorm[k] > 0)) throw NumericalError("margin head", "zero-norm class weight row " + std::to_string(k));
    for (std::size_t i = 0; i < dim; ++i) wn[k * dim + i] = weight[k * dim + i] / wnorm[k];
  }

  HeadResult<Real> out;
  out.d_embeddings = BasicTensor<Real>(embeddings.shape());
  BasicTensor<Real> d_wn(weight.shape());
  std::vector<Real> cosine(classes), logit(classes), dcos(classes);
  const Real s = static_cast<Real>(cfg.scale);
  const Real inv_batch = Real(1) / static_cast<Real>(batch);

  for (std::size_t b = 0; b < batch; ++b) {
    const int y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw InvalidArgument("margin head: label " + std::to_string(y) + " out of range");
    }
    const Real* e = embeddings.data() + b * dim;
    for (std::size_t k = 0; k < classes; ++k) {
      Real c = 0;
      for (std::size_t i = 0; i < dim; ++i) c += e[i] * wn[k * dim + i];
      cosine[k] = c;
      logit[k] = s * c;
    }
    const auto yk = static_cast<std::size_t>(y);
    const auto tl = target_logit<Real>(cosine[yk], cfg, ada ? norm_scalers[b] : Real(0));
    logit[yk] = tl.value;

    if (static_cast<std::size_t>(std::max_element(cosine.begin(), cosine.end()) - cosine.begin()) == yk) {
      ++out.correct;
    }

    const Real mx = *std::max_element(logit.begin(), logit.end());
    Real z = 0;
    for (std::size_t k = 0; k < classes; ++k) z += std::exp(logit[k] - mx);
    out.loss += (std::log(z) + mx - logit[yk]) * inv_batch;

    for (std::size_t k = 0; k < classes; ++k) {
      const Real p = std::exp(logit[k] - mx) / z;
      const Real dl = (p - (k == yk ? Real(1) : Real(0))) * inv_batch;
      dcos[k] = dl * (k == yk ? tl.dcos : s);
    }
    Real* de = out.d_embeddings.data() + b * dim;
    for (std::size_t k = 0; k < classes; ++k) {
      if (dcos[k] == Real(0)) continue;
      for (std::size_t i = 0; i < dim; ++i) {
        de[i] += dcos[k] * wn[k * dim + i];
        d_wn[k * dim + i] += dcos[k] * e[i];
      }
    }
  }

  // Back through the row normalization: (I - wn wn^T) / |w|.
  out.d_weight = BasicTensor<Real>(weight.shape());
  for (std::size_t k = 0; k < classes; ++k) {
    Real dot = 0;
    for (std::size_t i = 0; i < dim; ++i) dot += d_wn[k * dim + i] * wn[k * dim + i];
    for (std::size_t i = 0; i < dim; ++i) {
      out.d_weight[k * dim + i] = (d_wn[k * dim + i] - dot * wn[k * dim + i]) / wnorm[k];
    }
  }
  if (!std::isfinite(out.loss)) throw NumericalError("margin head", "non-finite loss");
  return out;
}

double m_s(std::span<const float> e1, std::span<const float> e2) {
  if (e1.size() != e2.size()) throw ShapeError("m_s: embedding sizes differ");
  double dot = 0, n1 = 0, n2 = 0;
  for (std::size_t i = 0; i < e1.size(); ++i) {
    dot += static_cast<double>(e1[i]) * e2[i];
    n1 += static_cast<double>(e1[i]) * e1[i];
    n2 += static_cast<double>(e2[i]) * e2[i];
  }
  if (n1 == 0 || n2 == 0) throw InvalidArgument("m_s: zero embedding");
  return std::clamp(dot / std::sqrt(n1 * n2), -1.0, 1.0);
}

double m_d(std::span<const float> e1, std::span<const float> e2) { return 1.0 - std::abs(m_s(e1, e2)); }

template TargetLogit<float> target_logit<float>(float, const MarginHeadConfig&, float);
template TargetLogit<double> target_logit<double>(double, const MarginHeadConfig&, double);
template HeadResult<float> margin_head_loss<float>(const BasicTensor<float>&, const BasicTensor<float>&,
                                                   std::span<const int>, const MarginHeadConfig&,
                                                   std::span<const float>);
template HeadResult<double> margin_head_loss<double>(const BasicTensor<double>&, const BasicTensor<double>&,
                                                     std::span<const int>, const MarginHeadConfig&,
                                                     std::span<const double>);

}  // namespace auggen::discriminator
