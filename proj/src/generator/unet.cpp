#include "auggen/generator/unet.hpp"

#include <cmath>

namespace auggen::generator {

using numerics::Shape;

void UNetConfig::validate() const {
  if (image_size < 4 || image_size % 4 != 0) throw InvalidArgument("unet: image size must be a multiple of 4");
  if (channels != 1 && channels != 3) throw InvalidArgument("unet: channels must be 1 or 3");
  if (groups < 1 || base_channels < groups || base_channels % groups != 0) {
    throw InvalidArgument("unet: base channels must be a positive multiple of groups");
  }
  if (emb_dim < 1 || fourier_dim < 2 || fourier_dim % 2 != 0) {
    throw InvalidArgument("unet: emb_dim >= 1 and even fourier_dim >= 2 required");
  }
  if (class_count < 1) throw InvalidArgument("unet: class count must be >= 1");
}

template <typename Real>
ConditionEmbedding<Real>::ConditionEmbedding(std::string name, std::size_t classes, std::size_t dim, Rng& rng) {
  BasicTensor<Real> w({classes, dim});
  for (auto& v : w.values()) v = static_cast<Real>(rng.normal());
  weight_ = numerics::Parameter<Real>(std::move(name), std::move(w));
}

template <typename Real>
BasicTensor<Real> ConditionEmbedding<Real>::forward(const BasicTensor<Real>& c) {
  const std::size_t classes = weight_.value.dim(0), dim = weight_.value.dim(1);
  if (c.rank() != 2 || c.dim(1) != classes) {
    throw ShapeError("condition embedding: expected [B, " + std::to_string(classes) + "], got " +
                     numerics::shape_string(c.shape()));
  }
  input_ = c;
  const std::size_t batch = c.dim(0);
  BasicTensor<Real> out({batch, dim});
  for (std::size_t b = 0; b < batch; ++b) {
    Real* o = out.data() + b * dim;
    for (std::size_t k = 0; k < classes; ++k) {
      const Real ck = c[b * classes + k];
      if (ck == Real(0)) continue;
      const Real* w = weight_.value.data() + k * dim;
      for (std::size_t e = 0; e < dim; ++e) o[e] += ck * w[e];
    }
  }
  return out;
}

template <typename Real>
void ConditionEmbedding<Real>::backward(const BasicTensor<Real>& dy) {
  const std::size_t classes = weight_.value.dim(0), dim = weight_.value.dim(1), batch = input_.dim(0);
  numerics::require_shape(dy, {batch, dim}, "condition embedding backward");
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t k = 0; k < classes; ++k) {
      const Real ck = input_[b * classes + k];
      if (ck == Real(0)) continue;
      Real* g = weight_.grad.data() + k * dim;
      for (std::size_t e = 0; e < dim; ++e) g[e] += ck * dy[b * dim + e];
    }
  }
  weight_.has_grad = true;
}

template <typename Real>
ResBlock<Real>::ResBlock(const std::string& name, std::size_t cin, std::size_t cout, std::size_t emb_dim,
                         std::size_t groups, Rng& rng)
    : gn1_(name + ".gn1", groups, cin),
      gn2_(name + ".gn2", groups, cout),
      act1_(name + ".act1"),
      act2_(name + ".act2"),
      conv1_(name + ".conv1", cin, cout, 3, rng),
      conv2_(name + ".conv2", cout, cout, 3, rng),
      emb_proj_(name + ".emb", emb_dim, cout, rng),
      has_skip_(cin != cout) {
  if (has_skip_) skip_ = numerics::Conv2d<Real>(name + ".skip", cin, cout, 1, rng);
}

namespace {

constexpr double kSkipScale = 0.70710678118654752440;

template <typename Real>
void add_channel_bias(BasicTensor<Real>& h, const BasicTensor<Real>& bias) {
  const std::size_t batch = h.dim(0), ch = h.dim(1), hw = h.dim(2) * h.dim(3);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      const Real v = bias[b * ch + c];
      Real* p = h.data() + (b * ch + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) p[i] += v;
    }
}

template <typename Real>
BasicTensor<Real> channel_sums(const BasicTensor<Real>& h) {
  const std::size_t batch = h.dim(0), ch = h.dim(1), hw = h.dim(2) * h.dim(3);
  BasicTensor<Real> out({batch, ch});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      const Real* p = h.data() + (b * ch + c) * hw;
      Real s = 0;
      for (std::size_t i = 0; i < hw; ++i) s += p[i];
      out[b * ch + c] = s;
    }
  return out;
}

template <typename Real>
BasicTensor<Real> concat_channels(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ShapeError("concat: " + numerics::shape_string(a.shape()) + " vs " + numerics::shape_string(b.shape()));
  }
  const std::size_t batch = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  BasicTensor<Real> out({batch, ca + cb, a.dim(2), a.dim(3)});
  for (std::size_t n = 0; n < batch; ++n) {
    std::copy_n(a.data() + n * ca * hw, ca * hw, out.data() + n * (ca + cb) * hw);
    std::copy_n(b.data() + n * cb * hw, cb * hw, out.data() + n * (ca + cb) * hw + ca * hw);
  }
  return out;
}

template <typename Real>
std::pair<BasicTensor<Real>, BasicTensor<Real>> split_channels(const BasicTensor<Real>& x, std::size_t ca) {
  const std::size_t batch = x.dim(0), c = x.dim(1), cb = c - ca, hw = x.dim(2) * x.dim(3);
  BasicTensor<Real> a({batch, ca, x.dim(2), x.dim(3)}), b({batch, cb, x.dim(2), x.dim(3)});
  for (std::size_t n = 0; n < batch; ++n) {
    std::copy_n(x.data() + n * c * hw, ca * hw, a.data() + n * ca * hw);
    std::copy_n(x.data() + n * c * hw + ca * hw, cb * hw, b.data() + n * cb * hw);
  }
  return {std::move(a), std::move(b)};
}

template <typename Real>
void scale_inplace(BasicTensor<Real>& t, Real s) {
  for (auto& v : t.values()) v *= s;
}

}  // namespace

template <typename Real>
BasicTensor<Real> ResBlock<Real>::forward(const BasicTensor<Real>& x, const BasicTensor<Real>& emb) {
  BasicTensor<Real> h = conv1_.forward(act1_.forward(gn1_.forward(x)));
  add_channel_bias(h, emb_proj_.forward(emb));
  h = conv2_.forward(act2_.forward(gn2_.forward(h)));
  if (has_skip_) {
    numerics::add_inplace(h, skip_.forward(x));
  } else {
    numerics::add_inplace(h, x);
  }
  scale_inplace(h, static_cast<Real>(kSkipScale));
  return h;
}

template <typename Real>
std::pair<BasicTensor<Real>, BasicTensor<Real>> ResBlock<Real>::backward(const BasicTensor<Real>& dy) {
  BasicTensor<Real> g = dy;
  scale_inplace(g, static_cast<Real>(kSkipScale));
  BasicTensor<Real> dh = gn2_.backward(act2_.backward(conv2_.backward(g)));
  BasicTensor<Real> demb = emb_proj_.backward(channel_sums(dh));
  BasicTensor<Real> dx = gn1_.backward(act1_.backward(conv1_.backward(dh)));
  numerics::add_inplace(dx, has_skip_ ? skip_.backward(g) : g);
  return {std::move(dx), std::move(demb)};
}

template <typename Real>
void ResBlock<Real>::collect(ParamList<Real>& out) {
  gn1_.collect(out);
  conv1_.collect(out);
  emb_proj_.collect(out);
  gn2_.collect(out);
  conv2_.collect(out);
  if (has_skip_) skip_.collect(out);
}

template <typename Real>
BasicTensor<Real> fourier_features(std::span<const Real> c_noise, std::size_t dim) {
  const std::size_t half = dim / 2;
  BasicTensor<Real> out({c_noise.size(), dim});
  for (std::size_t b = 0; b < c_noise.size(); ++b) {
    for (std::size_t k = 0; k < half; ++k) {
      const double f = half == 1 ? 1.0 : 0.5 * std::pow(32.0, static_cast<double>(k) / static_cast<double>(half - 1));
      const double arg = f * static_cast<double>(c_noise[b]);
      out[b * dim + k] = static_cast<Real>(std::cos(arg));
      out[b * dim + half + k] = static_cast<Real>(std::sin(arg));
    }
  }
  return out;
}

template <typename Real>
UNet<Real>::UNet(const UNetConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const auto ch = static_cast<std::size_t>(cfg.base_channels);
  const auto e = static_cast<std::size_t>(cfg.emb_dim);
  const auto g = static_cast<std::size_t>(cfg.groups);
  const auto c = static_cast<std::size_t>(cfg.channels);
  cond_ = ConditionEmbedding<Real>("unet.cond", static_cast<std::size_t>(cfg.class_count), e, rng);
  noise_proj_ = numerics::Linear<Real>("unet.noise", static_cast<std::size_t>(cfg.fourier_dim), e, rng);
  mlp_ = numerics::Linear<Real>("unet.mlp", e, e, rng);
  mlp_act0_ = numerics::SiLU<Real>("unet.mlp_act0");
  mlp_act1_ = numerics::SiLU<Real>("unet.mlp_act1");
  conv_in_ = numerics::Conv2d<Real>("unet.conv_in", c, ch, 3, rng);
  rb0_ = ResBlock<Real>("unet.rb0", ch, ch, e, g, rng);
  rb1_ = ResBlock<Real>("unet.rb1", ch, 2 * ch, e, g, rng);
  rb2_ = ResBlock<Real>("unet.rb2", 2 * ch, 2 * ch, e, g, rng);
  rb3_ = ResBlock<Real>("unet.rb3", 2 * ch, 2 * ch, e, g, rng);
  rb4_ = ResBlock<Real>("unet.rb4", 4 * ch, 2 * ch, e, g, rng);
  rb5_ = ResBlock<Real>("unet.rb5", 3 * ch, ch, e, g, rng);
  pool0_ = numerics::AvgPool2d<Real>("unet.pool0");
  pool1_ = numerics::AvgPool2d<Real>("unet.pool1");
  up0_ = numerics::NearestUpsample<Real>("unet.up0");
  up1_ = numerics::NearestUpsample<Real>("unet.up1");
  gn_out_ = numerics::GroupNorm<Real>("unet.gn_out", g, ch);
  act_out_ = numerics::SiLU<Real>("unet.act_out");
  conv_out_ = numerics::Conv2d<Real>("unet.conv_out", ch, c, 3, rng);
  up_channels_ = 2 * ch;
}

template <typename Real>
BasicTensor<Real> UNet<Real>::forward(const BasicTensor<Real>& x, std::span<const Real> c_noise,
                                      const BasicTensor<Real>& cond) {
  const auto s = static_cast<std::size_t>(cfg_.image_size);
  if (x.rank() != 4 || x.dim(1) != static_cast<std::size_t>(cfg_.channels) || x.dim(2) != s || x.dim(3) != s) {
    throw ShapeError("unet: bad input shape " + numerics::shape_string(x.shape()));
  }
  if (c_noise.size() != x.dim(0) || cond.rank() != 2 || cond.dim(0) != x.dim(0)) {
    throw ShapeError("unet: noise levels / conditions do not match the batch");
  }
  BasicTensor<Real> emb = noise_proj_.forward(fourier_features<Real>(c_noise, static_cast<std::size_t>(cfg_.fourier_dim)));
  numerics::add_inplace(emb, cond_.forward(cond));
  emb = mlp_act1_.forward(mlp_.forward(mlp_act0_.forward(emb)));
  numerics::require_finite(emb, "unet.embedding");

  const BasicTensor<Real> e0 = rb0_.forward(conv_in_.forward(x), emb);
  const BasicTensor<Real> e1 = rb1_.forward(pool0_.forward(e0), emb);
  BasicTensor<Real> m = rb3_.forward(rb2_.forward(pool1_.forward(e1), emb), emb);
  const BasicTensor<Real> d1 = rb4_.forward(concat_channels(up1_.forward(m), e1), emb);
  const BasicTensor<Real> d0 = rb5_.forward(concat_channels(up0_.forward(d1), e0), emb);
  BasicTensor<Real> out = conv_out_.forward(act_out_.forward(gn_out_.forward(d0)));
  numerics::require_finite(out, "unet.conv_out");
  return out;
}

template <typename Real>
BasicTensor<Real> UNet<Real>::backward(const BasicTensor<Real>& dy) {
  BasicTensor<Real> g = gn_out_.backward(act_out_.backward(conv_out_.backward(dy)));
  auto [dc0, demb] = rb5_.backward(g);
  auto [du0, de0] = split_channels(dc0, up_channels_);
  auto [dc1, demb4] = rb4_.backward(up0_.backward(du0));
  numerics::add_inplace(demb, demb4);
  auto [du1, de1] = split_channels(dc1, up_channels_);
  auto [dm3, demb3] = rb3_.backward(up1_.backward(du1));
  numerics::add_inplace(demb, demb3);
  auto [dm2, demb2] = rb2_.backward(dm3);
  numerics::add_inplace(demb, demb2);
  numerics::add_inplace(de1, pool1_.backward(dm2));
  auto [dp0, demb1] = rb1_.backward(de1);
  numerics::add_inplace(demb, demb1);
  numerics::add_inplace(de0, pool0_.backward(dp0));
  auto [dx0, demb0] = rb0_.backward(de0);
  numerics::add_inplace(demb, demb0);
  BasicTensor<Real> dx = conv_in_.backward(dx0);

  const BasicTensor<Real> dsum = mlp_act0_.backward(mlp_.backward(mlp_act1_.backward(demb)));
  noise_proj_.backward(dsum);
  cond_.backward(dsum);
  numerics::require_finite(dx, "unet (backward)");
  return dx;
}

template <typename Real>
ParamList<Real> UNet<Real>::parameters() {
  ParamList<Real> out;
  cond_.collect(out);
  noise_proj_.collect(out);
  mlp_.collect(out);
  conv_in_.collect(out);
  rb0_.collect(out);
  rb1_.collect(out);
  rb2_.collect(out);
  rb3_.collect(out);
  rb4_.collect(out);
  rb5_.collect(out);
  gn_out_.collect(out);
  conv_out_.collect(out);
  return out;
}

template class ConditionEmbedding<float>;
template class ConditionEmbedding<double>;
template class ResBlock<float>;
template class ResBlock<double>;
template class UNet<float>;
template class UNet<double>;
template BasicTensor<float> fourier_features<float>(std::span<const float>, std::size_t);
template BasicTensor<double> fourier_features<double>(std::span<const double>, std::size_t);

}  // namespace auggen::generator
