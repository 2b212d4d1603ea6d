#include "auggen/numerics/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace auggen::numerics {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

template <typename Real>
using MatrixRM = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using MapRM = Eigen::Map<MatrixRM<Real>>;
template <typename Real>
using ConstMapRM = Eigen::Map<const MatrixRM<Real>>;

template <typename Real>
BasicTensor<Real> uniform_init(Shape shape, double bound, Rng& rng) {
  BasicTensor<Real> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<Real>(rng.uniform(-bound, bound));
  return t;
}

void require_rank(const Shape& s, std::size_t rank, const std::string& where) {
  if (s.size() != rank) {
    throw ShapeError(where + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(s));
  }
}

// col: [cin*k*k, h*w]
template <typename Real>
void im2col(const Real* x, std::size_t cin, std::size_t h, std::size_t w, std::size_t k,
            Real* col) {
  const long pad = static_cast<long>(k / 2);
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < cin; ++c) {
    const Real* plane = x + c * hw;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        Real* row = col + ((c * k + ky) * k + kx) * hw;
        const long dy = static_cast<long>(ky) - pad;
        const long dx = static_cast<long>(kx) - pad;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + dy;
          Real* dst = row + y * w;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            std::fill(dst, dst + w, Real{0});
            continue;
          }
          const Real* src = plane + sy * static_cast<long>(w);
          for (std::size_t xx = 0; xx < w; ++xx) {
            const long sx = static_cast<long>(xx) + dx;
            dst[xx] = (sx < 0 || sx >= static_cast<long>(w)) ? Real{0} : src[sx];
          }
        }
      }
    }
  }
}

template <typename Real>
void col2im(const Real* col, std::size_t cin, std::size_t h, std::size_t w, std::size_t k,
            Real* dx) {
  const long pad = static_cast<long>(k / 2);
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < cin; ++c) {
    Real* plane = dx + c * hw;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const Real* row = col + ((c * k + ky) * k + kx) * hw;
        const long dy = static_cast<long>(ky) - pad;
        const long dxo = static_cast<long>(kx) - pad;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + dy;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          const Real* src = row + y * w;
          Real* dst = plane + sy * static_cast<long>(w);
          for (std::size_t xx = 0; xx < w; ++xx) {
            const long sx = static_cast<long>(xx) + dxo;
            if (sx >= 0 && sx < static_cast<long>(w)) dst[sx] += src[xx];
          }
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- Linear

template <typename Real>
Linear<Real>::Linear(std::string name, std::size_t in, std::size_t out, Rng& rng, bool bias)
    : name_(std::move(name)), in_(in), out_(out), use_bias_(bias) {
  const double bound = std::sqrt(3.0 / static_cast<double>(in));
  weight_ = Parameter<Real>(name_ + ".weight", uniform_init<Real>({out, in}, bound, rng));
  if (use_bias_) bias_ = Parameter<Real>(name_ + ".bias", BasicTensor<Real>({out}));
}

template <typename Real>
BasicTensor<Real> Linear<Real>::forward(const BasicTensor<Real>& x) {
  require_rank(x.shape(), 2, name_);
  if (x.dim(1) != in_) require_shape(x, {x.dim(0), in_}, name_);
  input_ = x;
  const std::size_t b = x.dim(0);
  BasicTensor<Real> y({b, out_});
  ConstMapRM<Real> X(x.data(), b, in_);
  ConstMapRM<Real> W(weight_.value.data(), out_, in_);
  MapRM<Real> Y(y.data(), b, out_);
  // Row by row: a sample's output bits must not depend on its batch.
  for (std::size_t i = 0; i < b; ++i) Y.row(i).noalias() = (W * X.row(i).transpose()).transpose();
  if (use_bias_) {
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t o = 0; o < out_; ++o) Y(i, o) += bias_.value[o];
  }
  return y;
}

template <typename Real>
BasicTensor<Real> Linear<Real>::backward(const BasicTensor<Real>& dy) {
  const std::size_t b = input_.dim(0);
  require_shape(dy, {b, out_}, name_ + " backward");
  ConstMapRM<Real> X(input_.data(), b, in_);
  ConstMapRM<Real> DY(dy.data(), b, out_);
  ConstMapRM<Real> W(weight_.value.data(), out_, in_);
  MapRM<Real> DW(weight_.grad.data(), out_, in_);
  DW.noalias() += DY.transpose() * X;
  weight_.has_grad = true;
  if (use_bias_) {
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t o = 0; o < out_; ++o) bias_.grad[o] += DY(i, o);
    bias_.has_grad = true;
  }
  BasicTensor<Real> dx({b, in_});
  MapRM<Real> DX(dx.data(), b, in_);
  DX.noalias() = DY * W;
  return dx;
}

template <typename Real>
void Linear<Real>::collect(ParamList<Real>& out) {
  out.push_back(&weight_);
  if (use_bias_) out.push_back(&bias_);
}

// ---------------------------------------------------------------- Conv2d

template <typename Real>
Conv2d<Real>::Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels,
                     std::size_t kernel, Rng& rng)
    : name_(std::move(name)), cin_(in_channels), cout_(out_channels), k_(kernel) {
  if (kernel % 2 == 0) throw InvalidArgument(name_ + ": kernel size must be odd");
  const double bound = std::sqrt(3.0 / static_cast<double>(cin_ * k_ * k_));
  weight_ = Parameter<Real>(name_ + ".weight",
                            uniform_init<Real>({cout_, cin_, k_, k_}, bound, rng));
  bias_ = Parameter<Real>(name_ + ".bias", BasicTensor<Real>({cout_}));
}

template <typename Real>
BasicTensor<Real> Conv2d<Real>::forward(const BasicTensor<Real>& x) {
  require_rank(x.shape(), 4, name_);
  if (x.dim(1) != cin_) require_shape(x, {x.dim(0), cin_, x.dim(2), x.dim(3)}, name_);
  input_ = x;
  const std::size_t b = x.dim(0), h = x.dim(2), w = x.dim(3), hw = h * w;
  const std::size_t kk = cin_ * k_ * k_;
  BasicTensor<Real> y({b, cout_, h, w});
  AlignedVector<Real> col(kk * hw);
  ConstMapRM<Real> W(weight_.value.data(), cout_, kk);
  for (std::size_t n = 0; n < b; ++n) {
    const Real* src = x.data() + n * cin_ * hw;
    Real* dst = y.data() + n * cout_ * hw;
    MapRM<Real> Y(dst, cout_, hw);
    if (k_ == 1) {
      Y.noalias() = W * ConstMapRM<Real>(src, cin_, hw);
    } else {
      im2col(src, cin_, h, w, k_, col.data());
      Y.noalias() = W * ConstMapRM<Real>(col.data(), kk, hw);
    }
    for (std::size_t o = 0; o < cout_; ++o) Y.row(o).array() += bias_.value[o];
  }
  return y;
}

template <typename Real>
BasicTensor<Real> Conv2d<Real>::backward(const BasicTensor<Real>& dy) {
  const std::size_t b = input_.dim(0), h = input_.dim(2), w = input_.dim(3), hw = h * w;
  require_shape(dy, {b, cout_, h, w}, name_ + " backward");
  const std::size_t kk = cin_ * k_ * k_;
  BasicTensor<Real> dx(input_.shape());
  AlignedVector<Real> col(kk * hw), dcol(kk * hw);
  ConstMapRM<Real> W(weight_.value.data(), cout_, kk);
  MapRM<Real> DW(weight_.grad.data(), cout_, kk);
  for (std::size_t n = 0; n < b; ++n) {
    const Real* src = input_.data() + n * cin_ * hw;
    ConstMapRM<Real> DY(dy.data() + n * cout_ * hw, cout_, hw);
    Real* dxn = dx.data() + n * cin_ * hw;
    if (k_ == 1) {
      DW.noalias() += DY * ConstMapRM<Real>(src, cin_, hw).transpose();
      MapRM<Real>(dxn, cin_, hw).noalias() = W.transpose() * DY;
    } else {
      im2col(src, cin_, h, w, k_, col.data());
      DW.noalias() += DY * ConstMapRM<Real>(col.data(), kk, hw).transpose();
      MapRM<Real>(dcol.data(), kk, hw).noalias() = W.transpose() * DY;
      col2im(dcol.data(), cin_, h, w, k_, dxn);
    }
    for (std::size_t o = 0; o < cout_; ++o) bias_.grad[o] += DY.row(o).sum();
  }
  weight_.has_grad = bias_.has_grad = true;
  return dx;
}

template <typename Real>
void Conv2d<Real>::collect(ParamList<Real>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---------------------------------------------------------------- SiLU

template <typename Real>
BasicTensor<Real> SiLU<Real>::forward(const BasicTensor<Real>& x) {
  input_ = x;
  BasicTensor<Real> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Real v = x[i];
    y[i] = v / (Real{1} + std::exp(-v));
  }
  return y;
}

template <typename Real>
BasicTensor<Real> SiLU<Real>::backward(const BasicTensor<Real>& dy) {
  require_shape(dy, input_.shape(), name_ + " backward");
  BasicTensor<Real> dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) {
    const Real v = input_[i];
    const Real s = Real{1} / (Real{1} + std::exp(-v));
    dx[i] = dy[i] * s * (Real{1} + v * (Real{1} - s));
  }
  return dx;
}

// ---------------------------------------------------------------- GroupNorm

template <typename Real>
GroupNorm<Real>::GroupNorm(std::string name, std::size_t groups, std::size_t channels, Real eps)
    : name_(std::move(name)), groups_(groups), channels_(channels), eps_(eps) {
  if (groups == 0 || channels % groups != 0) {
    throw InvalidArgument(name_ + ": channels must be divisible by groups");
  }
  gamma_ = Parameter<Real>(name_ + ".gamma", BasicTensor<Real>({channels}, Real{1}));
  beta_ = Parameter<Real>(name_ + ".beta", BasicTensor<Real>({channels}));
}

template <typename Real>
BasicTensor<Real> GroupNorm<Real>::forward(const BasicTensor<Real>& x) {
  require_rank(x.shape(), 4, name_);
  if (x.dim(1) != channels_) require_shape(x, {x.dim(0), channels_, x.dim(2), x.dim(3)}, name_);
  const std::size_t b = x.dim(0), hw = x.dim(2) * x.dim(3);
  const std::size_t cpg = channels_ / groups_, n = cpg * hw;
  xhat_ = BasicTensor<Real>(x.shape());
  inv_std_.assign(b * groups_, Real{0});
  BasicTensor<Real> y(x.shape());
  for (std::size_t s = 0; s < b; ++s) {
    for (std::size_t g = 0; g < groups_; ++g) {
      const std::size_t off = (s * channels_ + g * cpg) * hw;
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum += x[off + i];
      const double mean = sum / static_cast<double>(n);
      double var = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = x[off + i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(n);
      const Real inv = static_cast<Real>(1.0 / std::sqrt(var + static_cast<double>(eps_)));
      inv_std_[s * groups_ + g] = inv;
      for (std::size_t c = 0; c < cpg; ++c) {
        const std::size_t ch = g * cpg + c;
        const Real ga = gamma_.value[ch], be = beta_.value[ch];
        for (std::size_t i = 0; i < hw; ++i) {
          const std::size_t idx = off + c * hw + i;
          const Real xh = static_cast<Real>(x[idx] - mean) * inv;
          xhat_[idx] = xh;
          y[idx] = ga * xh + be;
        }
      }
    }
  }
  return y;
}

template <typename Real>
BasicTensor<Real> GroupNorm<Real>::backward(const BasicTensor<Real>& dy) {
  require_shape(dy, xhat_.shape(), name_ + " backward");
  const std::size_t b = dy.dim(0), hw = dy.dim(2) * dy.dim(3);
  const std::size_t cpg = channels_ / groups_, n = cpg * hw;
  BasicTensor<Real> dx(dy.shape());
  for (std::size_t s = 0; s < b; ++s) {
    for (std::size_t g = 0; g < groups_; ++g) {
      const std::size_t off = (s * channels_ + g * cpg) * hw;
      double sum_d = 0.0, sum_dx = 0.0;
      for (std::size_t c = 0; c < cpg; ++c) {
        const std::size_t ch = g * cpg + c;
        const Real ga = gamma_.value[ch];
        double dg = 0.0, db = 0.0;
        for (std::size_t i = 0; i < hw; ++i) {
          const std::size_t idx = off + c * hw + i;
          dg += static_cast<double>(dy[idx]) * xhat_[idx];
          db += dy[idx];
          const double d = static_cast<double>(dy[idx]) * ga;
          sum_d += d;
          sum_dx += d * xhat_[idx];
        }
        gamma_.grad[ch] += static_cast<Real>(dg);
        beta_.grad[ch] += static_cast<Real>(db);
      }
      const double inv = inv_std_[s * groups_ + g];
      const double nn = static_cast<double>(n);
      for (std::size_t c = 0; c < cpg; ++c) {
        const Real ga = gamma_.value[g * cpg + c];
        for (std::size_t i = 0; i < hw; ++i) {
          const std::size_t idx = off + c * hw + i;
          const double d = static_cast<double>(dy[idx]) * ga;
          dx[idx] = static_cast<Real>(inv / nn * (nn * d - sum_d - xhat_[idx] * sum_dx));
        }
      }
    }
  }
  gamma_.has_grad = beta_.has_grad = true;
  return dx;
}

template <typename Real>
void GroupNorm<Real>::collect(ParamList<Real>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

// ---------------------------------------------------------------- resampling

template <typename Real>
BasicTensor<Real> AvgPool2d<Real>::forward(const BasicTensor<Real>& x) {
  require_rank(x.shape(), 4, name_);
  if (x.dim(2) % 2 || x.dim(3) % 2) throw ShapeError(name_ + ": odd spatial extent");
  in_shape_ = x.shape();
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  BasicTensor<Real> y({x.dim(0), x.dim(1), h / 2, w / 2});
  for (std::size_t p = 0; p < planes; ++p) {
    const Real* src = x.data() + p * h * w;
    Real* dst = y.data() + p * (h / 2) * (w / 2);
    for (std::size_t yy = 0; yy < h / 2; ++yy)
      for (std::size_t xx = 0; xx < w / 2; ++xx) {
        const Real* a = src + 2 * yy * w + 2 * xx;
        dst[yy * (w / 2) + xx] = Real(0.25) * (a[0] + a[1] + a[w] + a[w + 1]);
      }
  }
  return y;
}

template <typename Real>
BasicTensor<Real> AvgPool2d<Real>::backward(const BasicTensor<Real>& dy) {
  const std::size_t h = in_shape_[2], w = in_shape_[3];
  require_shape(dy, {in_shape_[0], in_shape_[1], h / 2, w / 2}, name_ + " backward");
  BasicTensor<Real> dx(in_shape_);
  const std::size_t planes = in_shape_[0] * in_shape_[1];
  for (std::size_t p = 0; p < planes; ++p) {
    const Real* src = dy.data() + p * (h / 2) * (w / 2);
    Real* dst = dx.data() + p * h * w;
    for (std::size_t yy = 0; yy < h / 2; ++yy)
      for (std::size_t xx = 0; xx < w / 2; ++xx) {
        const Real g = Real(0.25) * src[yy * (w / 2) + xx];
        Real* a = dst + 2 * yy * w + 2 * xx;
        a[0] = a[1] = a[w] = a[w + 1] = g;
      }
  }
  return dx;
}

template <typename Real>
BasicTensor<Real> NearestUpsample<Real>::forward(const BasicTensor<Real>& x) {
  require_rank(x.shape(), 4, name_);
  in_shape_ = x.shape();
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  BasicTensor<Real> y({x.dim(0), x.dim(1), 2 * h, 2 * w});
  for (std::size_t p = 0; p < planes; ++p) {
    const Real* src = x.data() + p * h * w;
    Real* dst = y.data() + p * 4 * h * w;
    for (std::size_t yy = 0; yy < 2 * h; ++yy)
      for (std::size_t xx = 0; xx < 2 * w; ++xx) dst[yy * 2 * w + xx] = src[(yy / 2) * w + xx / 2];
  }
  return y;
}

template <typename Real>
BasicTensor<Real> NearestUpsample<Real>::backward(const BasicTensor<Real>& dy) {
  const std::size_t h = in_shape_[2], w = in_shape_[3];
  require_shape(dy, {in_shape_[0], in_shape_[1], 2 * h, 2 * w}, name_ + " backward");
  BasicTensor<Real> dx(in_shape_);
  const std::size_t planes = in_shape_[0] * in_shape_[1];
  for (std::size_t p = 0; p < planes; ++p) {
    const Real* src = dy.data() + p * 4 * h * w;
    Real* dst = dx.data() + p * h * w;
    for (std::size_t yy = 0; yy < 2 * h; ++yy)
      for (std::size_t xx = 0; xx < 2 * w; ++xx) dst[(yy / 2) * w + xx / 2] += src[yy * 2 * w + xx];
  }
  return dx;
}

template <typename Real>
BasicTensor<Real> NearestDownsample<Real>::forward(const BasicTensor<Real>& x) {
  require_rank(x.shape(), 4, name_);
  if (x.dim(2) % 2 || x.dim(3) % 2) throw ShapeError(name_ + ": odd spatial extent");
  in_shape_ = x.shape();
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  BasicTensor<Real> y({x.dim(0), x.dim(1), h / 2, w / 2});
  for (std::size_t p = 0; p < planes; ++p) {
    const Real* src = x.data() + p * h * w;
    Real* dst = y.data() + p * (h / 2) * (w / 2);
    for (std::size_t yy = 0; yy < h / 2; ++yy)
      for (std::size_t xx = 0; xx < w / 2; ++xx) dst[yy * (w / 2) + xx] = src[2 * yy * w + 2 * xx];
  }
  return y;
}

template <typename Real>
BasicTensor<Real> NearestDownsample<Real>::backward(const BasicTensor<Real>& dy) {
  const std::size_t h = in_shape_[2], w = in_shape_[3];
  require_shape(dy, {in_shape_[0], in_shape_[1], h / 2, w / 2}, name_ + " backward");
  BasicTensor<Real> dx(in_shape_);
  const std::size_t planes = in_shape_[0] * in_shape_[1];
  for (std::size_t p = 0; p < planes; ++p) {
    const Real* src = dy.data() + p * (h / 2) * (w / 2);
    Real* dst = dx.data() + p * h * w;
    for (std::size_t yy = 0; yy < h / 2; ++yy)
      for (std::size_t xx = 0; xx < w / 2; ++xx) dst[2 * yy * w + 2 * xx] = src[yy * (w / 2) + xx];
  }
  return dx;
}

template <typename Real>
BasicTensor<Real> Flatten<Real>::forward(const BasicTensor<Real>& x) {
  in_shape_ = x.shape();
  return x.reshaped({x.dim(0), x.size() / x.dim(0)});
}

template <typename Real>
BasicTensor<Real> Flatten<Real>::backward(const BasicTensor<Real>& dy) {
  return dy.reshaped(in_shape_);
}

// ---------------------------------------------------------------- L2Normalize

template <typename Real>
BasicTensor<Real> L2Normalize<Real>::forward(const BasicTensor<Real>& x) {
  require_rank(x.shape(), 2, name_);
  const std::size_t b = x.dim(0), d = x.dim(1);
  output_ = BasicTensor<Real>(x.shape());
  norms_.assign(b, Real{0});
  for (std::size_t i = 0; i < b; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j) ss += static_cast<double>(x[i * d + j]) * x[i * d + j];
    const double n = std::max(std::sqrt(ss), 1e-12);
    norms_[i] = static_cast<Real>(n);
    for (std::size_t j = 0; j < d; ++j) output_[i * d + j] = static_cast<Real>(x[i * d + j] / n);
  }
  return output_;
}

template <typename Real>
BasicTensor<Real> L2Normalize<Real>::backward(const BasicTensor<Real>& dy) {
  require_shape(dy, output_.shape(), name_ + " backward");
  const std::size_t b = dy.dim(0), d = dy.dim(1);
  BasicTensor<Real> dx(dy.shape());
  for (std::size_t i = 0; i < b; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) dot += static_cast<double>(dy[i * d + j]) * output_[i * d + j];
    for (std::size_t j = 0; j < d; ++j) {
      dx[i * d + j] = static_cast<Real>((dy[i * d + j] - output_[i * d + j] * dot) / norms_[i]);
    }
  }
  return dx;
}

// ---------------------------------------------------------------- losses

template <typename Real>
LossResult<Real> softmax_cross_entropy(const BasicTensor<Real>& logits,
                                       std::span<const int> labels) {
  require_rank(logits.shape(), 2, "softmax_cross_entropy");
  const std::size_t b = logits.dim(0), n = logits.dim(1);
  if (labels.size() != b) throw ShapeError("softmax_cross_entropy: label count != batch");
  LossResult<Real> out{Real{0}, BasicTensor<Real>(logits.shape())};
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= n) {
      throw InvalidArgument("softmax_cross_entropy: label out of range");
    }
    const Real* row = logits.data() + i * n;
    const Real mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(static_cast<double>(row[j] - mx));
    total += std::log(z) + mx - row[y];
    for (std::size_t j = 0; j < n; ++j) {
      const double p = std::exp(static_cast<double>(row[j] - mx)) / z;
      out.grad[i * n + j] = static_cast<Real>((p - (static_cast<int>(j) == y ? 1.0 : 0.0)) /
                                              static_cast<double>(b));
    }
  }
  out.loss = static_cast<Real>(total / static_cast<double>(b));
  return out;
}

template <typename Real>
std::size_t count_correct(const BasicTensor<Real>& logits, std::span<const int> labels) {
  const std::size_t b = logits.dim(0), n = logits.dim(1);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < b; ++i) {
    const Real* row = logits.data() + i * n;
    const auto arg = std::max_element(row, row + n) - row;
    if (arg == labels[i]) ++hits;
  }
  return hits;
}

// ---------------------------------------------------------------- Sequential

template <typename Real>
BasicTensor<Real> Sequential<Real>::forward(const BasicTensor<Real>& x) {
  BasicTensor<Real> h = x;
  for (auto& layer : layers_) {
    std::visit(
        [&](auto& l) {
          h = l.forward(h);
          require_finite(h, l.name());
        },
        layer);
  }
  return h;
}

template <typename Real>
BasicTensor<Real> Sequential<Real>::backward(const BasicTensor<Real>& dy) {
  BasicTensor<Real> g = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    std::visit(
        [&](auto& l) {
          g = l.backward(g);
          require_finite(g, l.name() + " (backward)");
        },
        *it);
  }
  return g;
}

template <typename Real>
ParamList<Real> Sequential<Real>::parameters() {
  ParamList<Real> out;
  for (auto& layer : layers_) std::visit([&](auto& l) { l.collect(out); }, layer);
  return out;
}

template <typename Real>
void Sequential<Real>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

template <typename Real>
Real forward_backward(Sequential<Real>& model, const BasicTensor<Real>& batch,
                      const LossSpec<Real>& loss) {
  const BasicTensor<Real> y = model.forward(batch);
  Real value{0};
  BasicTensor<Real> dy(y.shape());
  if (const auto* ce = std::get_if<SoftmaxCrossEntropyLoss>(&loss)) {
    auto r = softmax_cross_entropy(y, ce->labels);
    value = r.loss;
    dy = std::move(r.grad);
  } else if (std::holds_alternative<SumLoss>(loss)) {
    double s = 0.0;
    for (Real v : y.values()) s += v;
    value = static_cast<Real>(s);
    dy.fill(Real{1});
  } else {
    const auto& mse = std::get<MeanSquaredErrorLoss<Real>>(loss);
    require_shape(mse.target, y.shape(), "mse target");
    const double inv_b = 1.0 / static_cast<double>(y.dim(0));
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double d = static_cast<double>(y[i]) - mse.target[i];
      s += d * d;
      dy[i] = static_cast<Real>(2.0 * d * inv_b);
    }
    value = static_cast<Real>(s * inv_b);
  }
  if (!std::isfinite(value)) throw NumericalError("loss", "non-finite loss");
  model.backward(dy);
  return value;
}

#define AUGGEN_INSTANTIATE(Real)                                                         \
  template class Linear<Real>;                                                           \
  template class Conv2d<Real>;                                                           \
  template class SiLU<Real>;                                                             \
  template class GroupNorm<Real>;                                                        \
  template class AvgPool2d<Real>;                                                        \
  template class NearestUpsample<Real>;                                                  \
  template class NearestDownsample<Real>;                                                \
  template class Flatten<Real>;                                                          \
  template class L2Normalize<Real>;                                                      \
  template class Sequential<Real>;                                                       \
  template LossResult<Real> softmax_cross_entropy(const BasicTensor<Real>&,              \
                                                  std::span<const int>);                 \
  template std::size_t count_correct(const BasicTensor<Real>&, std::span<const int>);   \
  template Real forward_backward(Sequential<Real>&, const BasicTensor<Real>&,            \
                                 const LossSpec<Real>&);

AUGGEN_INSTANTIATE(float)
AUGGEN_INSTANTIATE(double)

}  // namespace auggen::numerics
