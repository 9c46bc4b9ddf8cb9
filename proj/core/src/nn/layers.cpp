// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "qdbench/nn/layers.hpp"

#include "qdbench/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>

namespace qdbench::nn {
namespace {

template <typename T>
using RowVecMap = Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>;
template <typename T>
using ConstRowVecMap = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;

void require_rank(const Shape& s, std::size_t rank, const char* where) {
  if (s.size() != rank) {
    throw ShapeError(std::string(where) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(s));
  }
}

void require_trailing(const Shape& s, std::size_t dim, const char* where) {
  if (s.empty() || s.back() != dim) {
    throw ShapeError(std::string(where) + ": expected trailing dimension " + std::to_string(dim) +
                     ", got " + shape_string(s));
  }
}

// Target working-set size for one im2col chunk, in elements.
constexpr std::size_t kIm2colBudget = std::size_t{1} << 22;

}  // namespace

template <typename T>
void init_fan_in_uniform(Tensor<T>& w, std::size_t fan_in, double gain, Rng& rng) {
  const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
  for (auto& v : w.values()) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
void init_normal(Tensor<T>& w, double stddev, Rng& rng) {
  for (auto& v : w.values()) v = static_cast<T>(stddev * rng.normal());
}

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(std::string name, std::size_t in, std::size_t out, Rng& rng, double gain)
    : in_(in),
      out_(out),
      weight_(name + ".weight", Shape{out, in}),
      bias_(name + ".bias", Shape{out}) {
  init_fan_in_uniform(weight_.value, in, gain, rng);
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) const {
  require_trailing(x.shape(), in_, "Linear");
  Shape shape = x.shape();
  shape.back() = out_;
  Tensor<T> y(shape);
  auto ym = y.as_matrix();
  const ConstMatrixMap<T> w(weight_.value.data(), out_, in_);
  ym.noalias() = x.as_matrix() * w.transpose();
  ym.rowwise() += ConstRowVecMap<T>(bias_.value.data(), out_);
  return y;
}

template <typename T>
Tensor<T> Linear<T>::forward_train(const Tensor<T>& x) {
  input_ = x;
  return forward(x);
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& dy) {
  require_trailing(dy.shape(), out_, "Linear::backward");
  const auto dym = dy.as_matrix();
  MatrixMap<T> dw(weight_.grad.data(), out_, in_);
  dw.noalias() += dym.transpose() * input_.as_matrix();
  RowVecMap<T>(bias_.grad.data(), out_) += dym.colwise().sum();
  Shape shape = dy.shape();
  shape.back() = in_;
  Tensor<T> dx(shape);
  const ConstMatrixMap<T> w(weight_.value.data(), out_, in_);
  dx.as_matrix().noalias() = dym * w;
  return dx;
}

template <typename T>
void Linear<T>::collect(ParameterRefs<T>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels,
                  std::size_t kernel, std::size_t padding, Rng& rng, double gain)
    : cin_(in_channels),
      cout_(out_channels),
      k_(kernel),
      pad_(padding),
      weight_(name + ".weight", Shape{out_channels, kernel, kernel, in_channels}),
      bias_(name + ".bias", Shape{out_channels}) {
  init_fan_in_uniform(weight_.value, in_channels * kernel * kernel, gain, rng);
}

template <typename T>
std::size_t Conv2d<T>::chunk_samples(std::size_t out_pixels) const {
  const std::size_t per_sample = std::max<std::size_t>(1, out_pixels * k_ * k_ * cin_);
  return std::max<std::size_t>(1, kIm2colBudget / per_sample);
}

template <typename T>
void Conv2d<T>::im2col(const Tensor<T>& x, std::size_t n0, std::size_t count,
                       MatrixRM<T>& cols) const {
  const std::size_t h = x.dim(1), w = x.dim(2);
  const std::size_t ho = h + 2 * pad_ - k_ + 1, wo = w + 2 * pad_ - k_ + 1;
  const std::size_t kdim = k_ * k_ * cin_;
  cols.resize(static_cast<Eigen::Index>(count * ho * wo), static_cast<Eigen::Index>(kdim));
  T* dst = cols.data();
  const auto ipad = static_cast<std::ptrdiff_t>(pad_);
  for (std::size_t n = n0; n < n0 + count; ++n) {
    const T* img = x.data() + n * h * w * cin_;
    for (std::size_t oh = 0; oh < ho; ++oh) {
      for (std::size_t ow = 0; ow < wo; ++ow) {
        for (std::size_t kh = 0; kh < k_; ++kh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh + kh) - ipad;
          for (std::size_t kw = 0; kw < k_; ++kw) {
            const auto iw = static_cast<std::ptrdiff_t>(ow + kw) - ipad;
            if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(h) ||
                iw >= static_cast<std::ptrdiff_t>(w)) {
              std::fill(dst, dst + cin_, T(0));
            } else {
              std::memcpy(dst, img + (static_cast<std::size_t>(ih) * w + static_cast<std::size_t>(iw)) * cin_,
                          cin_ * sizeof(T));
            }
            dst += cin_;
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) const {
  require_rank(x.shape(), 4, "Conv2d");
  require_trailing(x.shape(), cin_, "Conv2d");
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h + 2 * pad_ < k_ || w + 2 * pad_ < k_) throw ShapeError("Conv2d: input smaller than kernel");
  const std::size_t ho = h + 2 * pad_ - k_ + 1, wo = w + 2 * pad_ - k_ + 1;
  Tensor<T> y(Shape{n, ho, wo, cout_});
  const std::size_t kdim = k_ * k_ * cin_;
  const ConstMatrixMap<T> wmat(weight_.value.data(), cout_, kdim);
  const ConstRowVecMap<T> b(bias_.value.data(), cout_);
  const std::size_t chunk = chunk_samples(ho * wo);
  MatrixRM<T> cols;
  for (std::size_t n0 = 0; n0 < n; n0 += chunk) {
    const std::size_t count = std::min(chunk, n - n0);
    im2col(x, n0, count, cols);
    MatrixMap<T> out(y.data() + n0 * ho * wo * cout_, count * ho * wo, cout_);
    out.noalias() = cols * wmat.transpose();
    out.rowwise() += b;
  }
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::forward_train(const Tensor<T>& x) {
  input_ = x;
  return forward(x);
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& dy, bool input_grad) {
  const Tensor<T>& x = input_;
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t ho = h + 2 * pad_ - k_ + 1, wo = w + 2 * pad_ - k_ + 1;
  require_shape(dy.shape(), Shape{n, ho, wo, cout_}, "Conv2d::backward");
  const std::size_t kdim = k_ * k_ * cin_;
  const ConstMatrixMap<T> wmat(weight_.value.data(), cout_, kdim);
  MatrixMap<T> dw(weight_.grad.data(), cout_, kdim);
  RowVecMap<T> db(bias_.grad.data(), cout_);
  Tensor<T> dx;
  if (input_grad) dx = Tensor<T>(x.shape());
  const std::size_t chunk = chunk_samples(ho * wo);
  const auto ipad = static_cast<std::ptrdiff_t>(pad_);
  MatrixRM<T> cols;
  MatrixRM<T> dcols;
  for (std::size_t n0 = 0; n0 < n; n0 += chunk) {
    const std::size_t count = std::min(chunk, n - n0);
    im2col(x, n0, count, cols);
    const ConstMatrixMap<T> g(dy.data() + n0 * ho * wo * cout_, count * ho * wo, cout_);
    dw.noalias() += g.transpose() * cols;
    db += g.colwise().sum();
    if (!input_grad) continue;
    dcols.noalias() = g * wmat;
    const T* src = dcols.data();
    for (std::size_t s = n0; s < n0 + count; ++s) {
      T* img = dx.data() + s * h * w * cin_;
      for (std::size_t oh = 0; oh < ho; ++oh) {
        for (std::size_t ow = 0; ow < wo; ++ow) {
          for (std::size_t kh = 0; kh < k_; ++kh) {
            const auto ih = static_cast<std::ptrdiff_t>(oh + kh) - ipad;
            for (std::size_t kw = 0; kw < k_; ++kw) {
              const auto iw = static_cast<std::ptrdiff_t>(ow + kw) - ipad;
              if (ih >= 0 && iw >= 0 && ih < static_cast<std::ptrdiff_t>(h) &&
                  iw < static_cast<std::ptrdiff_t>(w)) {
                T* d = img + (static_cast<std::size_t>(ih) * w + static_cast<std::size_t>(iw)) * cin_;
                for (std::size_t c = 0; c < cin_; ++c) d[c] += src[c];
              }
              src += cin_;
            }
          }
        }
      }
    }
  }
  return dx;
}

template <typename T>
void Conv2d<T>::collect(ParameterRefs<T>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ------------------------------------------------------ ConvTranspose2x2

template <typename T>
ConvTranspose2x2<T>::ConvTranspose2x2(std::string name, std::size_t in_channels,
                                      std::size_t out_channels, Rng& rng, double gain)
    : cin_(in_channels),
      cout_(out_channels),
      weight_(name + ".weight", Shape{in_channels, 2, 2, out_channels}),
      bias_(name + ".bias", Shape{out_channels}) {
  init_fan_in_uniform(weight_.value, in_channels, gain, rng);
}

template <typename T>
Tensor<T> ConvTranspose2x2<T>::forward(const Tensor<T>& x) const {
  require_rank(x.shape(), 4, "ConvTranspose2x2");
  require_trailing(x.shape(), cin_, "ConvTranspose2x2");
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2);
  const MatrixRM<T> g = x.as_matrix() * ConstMatrixMap<T>(weight_.value.data(), cin_, 4 * cout_);
  Tensor<T> y(Shape{n, 2 * h, 2 * w, cout_});
  const T* b = bias_.value.data();
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        const T* src = g.data() + ((s * h + i) * w + j) * 4 * cout_;
        for (std::size_t a = 0; a < 2; ++a) {
          for (std::size_t bb = 0; bb < 2; ++bb) {
            T* dst = y.data() + ((s * 2 * h + 2 * i + a) * 2 * w + 2 * j + bb) * cout_;
            const T* blk = src + (a * 2 + bb) * cout_;
            for (std::size_t c = 0; c < cout_; ++c) dst[c] = blk[c] + b[c];
          }
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> ConvTranspose2x2<T>::forward_train(const Tensor<T>& x) {
  input_ = x;
  return forward(x);
}

template <typename T>
Tensor<T> ConvTranspose2x2<T>::backward(const Tensor<T>& dy) {
  const std::size_t n = input_.dim(0), h = input_.dim(1), w = input_.dim(2);
  require_shape(dy.shape(), Shape{n, 2 * h, 2 * w, cout_}, "ConvTranspose2x2::backward");
  MatrixRM<T> g(static_cast<Eigen::Index>(n * h * w), static_cast<Eigen::Index>(4 * cout_));
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        T* dst = g.data() + ((s * h + i) * w + j) * 4 * cout_;
        for (std::size_t a = 0; a < 2; ++a) {
          for (std::size_t bb = 0; bb < 2; ++bb) {
            const T* src = dy.data() + ((s * 2 * h + 2 * i + a) * 2 * w + 2 * j + bb) * cout_;
            std::memcpy(dst + (a * 2 + bb) * cout_, src, cout_ * sizeof(T));
          }
        }
      }
    }
  }
  const ConstMatrixMap<T> wmat(weight_.value.data(), cin_, 4 * cout_);
  MatrixMap<T>(weight_.grad.data(), cin_, 4 * cout_).noalias() += input_.as_matrix().transpose() * g;
  RowVecMap<T>(bias_.grad.data(), cout_) += dy.as_matrix().colwise().sum();
  Tensor<T> dx(input_.shape());
  dx.as_matrix().noalias() = g * wmat.transpose();
  return dx;
}

template <typename T>
void ConvTranspose2x2<T>::collect(ParameterRefs<T>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ------------------------------------------------------------ MaxPool2x2

template <typename T>
Tensor<T> MaxPool2x2<T>::pool(const Tensor<T>& x, std::vector<std::uint32_t>* argmax) const {
  require_rank(x.shape(), 4, "MaxPool2x2");
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const std::size_t ho = h / 2, wo = w / 2;
  if (ho == 0 || wo == 0) throw ShapeError("MaxPool2x2: input smaller than 2x2");
  Tensor<T> y(Shape{n, ho, wo, c});
  if (argmax) argmax->assign(y.size(), 0);
  std::size_t out = 0;
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < ho; ++i) {
      for (std::size_t j = 0; j < wo; ++j) {
        for (std::size_t ch = 0; ch < c; ++ch, ++out) {
          std::size_t best = ((s * h + 2 * i) * w + 2 * j) * c + ch;
          for (std::size_t a = 0; a < 2; ++a) {
            for (std::size_t b = 0; b < 2; ++b) {
              const std::size_t idx = ((s * h + 2 * i + a) * w + 2 * j + b) * c + ch;
              if (x[idx] > x[best]) best = idx;
            }
          }
          y[out] = x[best];
          if (argmax) (*argmax)[out] = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> MaxPool2x2<T>::forward(const Tensor<T>& x) const {
  return pool(x, nullptr);
}

template <typename T>
Tensor<T> MaxPool2x2<T>::forward_train(const Tensor<T>& x) {
  input_shape_ = x.shape();
  return pool(x, &argmax_);
}

template <typename T>
Tensor<T> MaxPool2x2<T>::backward(const Tensor<T>& dy) {
  if (dy.size() != argmax_.size()) throw ShapeError("MaxPool2x2::backward: gradient size mismatch");
  Tensor<T> dx(input_shape_);
  for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax_[i]] += dy[i];
  return dx;
}

// --------------------------------------------------------- GlobalAvgPool

template <typename T>
Tensor<T> GlobalAvgPool<T>::forward(const Tensor<T>& x) const {
  require_rank(x.shape(), 4, "GlobalAvgPool");
  const std::size_t n = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
  Tensor<T> y(Shape{n, c});
  const T scale = T(1) / static_cast<T>(hw);
  for (std::size_t s = 0; s < n; ++s) {
    const ConstMatrixMap<T> img(x.data() + s * hw * c, hw, c);
    RowVecMap<T>(y.data() + s * c, c) = img.colwise().sum() * scale;
  }
  return y;
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::forward_train(const Tensor<T>& x) {
  input_shape_ = x.shape();
  return forward(x);
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::backward(const Tensor<T>& dy) {
  const std::size_t n = input_shape_[0], hw = input_shape_[1] * input_shape_[2], c = input_shape_[3];
  require_shape(dy.shape(), Shape{n, c}, "GlobalAvgPool::backward");
  Tensor<T> dx(input_shape_);
  const T scale = T(1) / static_cast<T>(hw);
  for (std::size_t s = 0; s < n; ++s) {
    MatrixMap<T> img(dx.data() + s * hw * c, hw, c);
    img.rowwise() = ConstRowVecMap<T>(dy.data() + s * c, c) * scale;
  }
  return dx;
}

// --------------------------------------------------------------- Dropout

template <typename T>
Dropout<T>::Dropout(double rate) : rate_(rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("Dropout: rate must lie in [0, 1)");
}

template <typename T>
Tensor<T> Dropout<T>::forward_train(const Tensor<T>& x, Rng& rng) {
  if (rate_ == 0.0) {
    mask_ = Tensor<T>();
    return x;
  }
  mask_ = Tensor<T>(x.shape());
  const T keep = static_cast<T>(1.0 / (1.0 - rate_));
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask_[i] = rng.uniform() >= rate_ ? keep : T(0);
    y[i] = x[i] * mask_[i];
  }
  return y;
}

template <typename T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& dy) {
  if (mask_.empty()) return dy;
  Tensor<T> dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * mask_[i];
  return dx;
}

// ----------------------------------------------------------- Elementwise

namespace {

template <typename T>
T apply(Activation kind, T x) {
  switch (kind) {
    case Activation::relu:
      return x > T(0) ? x : T(0);
    case Activation::tanh:
      return std::tanh(x);
    case Activation::gelu:
      return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
    case Activation::softplus:
      return x > T(20) ? x : std::log1p(std::exp(x));
  }
  return x;
}

template <typename T>
T derivative(Activation kind, T x) {
  switch (kind) {
    case Activation::relu:
      return x > T(0) ? T(1) : T(0);
    case Activation::tanh: {
      const T t = std::tanh(x);
      return T(1) - t * t;
    }
    case Activation::gelu: {
      const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
      const T pdf = std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * std::numbers::pi_v<T>);
      return cdf + x * pdf;
    }
    case Activation::softplus:
      return T(1) / (T(1) + std::exp(-x));
  }
  return T(1);
}

}  // namespace

template <typename T>
Tensor<T> Elementwise<T>::forward(const Tensor<T>& x) const {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = apply(kind_, x[i]);
  return y;
}

template <typename T>
Tensor<T> Elementwise<T>::forward_train(const Tensor<T>& x) {
  input_ = x;
  return forward(x);
}

template <typename T>
Tensor<T> Elementwise<T>::backward(const Tensor<T>& dy) {
  if (dy.shape() != input_.shape()) throw ShapeError("Elementwise::backward: shape mismatch");
  Tensor<T> dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * derivative(kind_, input_[i]);
  return dx;
}

// --------------------------------------------------------------- Softmax

template <typename T>
Tensor<T> Softmax<T>::forward(const Tensor<T>& x) const {
  Tensor<T> y(x.shape());
  const auto xm = x.as_matrix();
  auto ym = y.as_matrix();
  for (Eigen::Index r = 0; r < xm.rows(); ++r) {
    const T mx = xm.row(r).maxCoeff();
    ym.row(r) = (xm.row(r).array() - mx).exp();
    ym.row(r) /= ym.row(r).sum();
  }
  return y;
}

template <typename T>
Tensor<T> Softmax<T>::forward_train(const Tensor<T>& x) {
  output_ = forward(x);
  return output_;
}

template <typename T>
Tensor<T> Softmax<T>::backward(const Tensor<T>& dy) {
  if (dy.shape() != output_.shape()) throw ShapeError("Softmax::backward: shape mismatch");
  Tensor<T> dx(dy.shape());
  const auto ym = output_.as_matrix();
  const auto gm = dy.as_matrix();
  auto dm = dx.as_matrix();
  for (Eigen::Index r = 0; r < ym.rows(); ++r) {
    const T dot = ym.row(r).dot(gm.row(r));
    dm.row(r) = ym.row(r).array() * (gm.row(r).array() - dot);
  }
  return dx;
}

// ------------------------------------------------------------- LayerNorm

template <typename T>
LayerNorm<T>::LayerNorm(std::string name, std::size_t dim, double eps)
    : dim_(dim), eps_(eps), gamma_(name + ".weight", Shape{dim}), beta_(name + ".bias", Shape{dim}) {
  gamma_.value.fill(T(1));
}

template <typename T>
Tensor<T> LayerNorm<T>::normalize(const Tensor<T>& x, Tensor<T>* xhat, std::vector<T>* rstd) const {
  require_trailing(x.shape(), dim_, "LayerNorm");
  Tensor<T> y(x.shape());
  const auto xm = x.as_matrix();
  auto ym = y.as_matrix();
  const ConstRowVecMap<T> g(gamma_.value.data(), dim_);
  const ConstRowVecMap<T> b(beta_.value.data(), dim_);
  if (xhat) *xhat = Tensor<T>(x.shape());
  if (rstd) rstd->assign(static_cast<std::size_t>(xm.rows()), T(0));
  const T d = static_cast<T>(dim_);
  for (Eigen::Index r = 0; r < xm.rows(); ++r) {
    const T mean = xm.row(r).sum() / d;
    const T var = (xm.row(r).array() - mean).square().sum() / d;
    const T inv = T(1) / std::sqrt(var + static_cast<T>(eps_));
    const Eigen::Matrix<T, 1, Eigen::Dynamic> h = (xm.row(r).array() - mean) * inv;
    ym.row(r) = h.array() * g.array() + b.array();
    if (xhat) xhat->as_matrix().row(r) = h;
    if (rstd) (*rstd)[static_cast<std::size_t>(r)] = inv;
  }
  return y;
}

template <typename T>
Tensor<T> LayerNorm<T>::forward(const Tensor<T>& x) const {
  return normalize(x, nullptr, nullptr);
}

template <typename T>
Tensor<T> LayerNorm<T>::forward_train(const Tensor<T>& x) {
  return normalize(x, &xhat_, &rstd_);
}

template <typename T>
Tensor<T> LayerNorm<T>::backward(const Tensor<T>& dy) {
  if (dy.shape() != xhat_.shape()) throw ShapeError("LayerNorm::backward: shape mismatch");
  Tensor<T> dx(dy.shape());
  const auto gm = dy.as_matrix();
  const auto hm = xhat_.as_matrix();
  auto dm = dx.as_matrix();
  const ConstRowVecMap<T> g(gamma_.value.data(), dim_);
  RowVecMap<T> dg(gamma_.grad.data(), dim_);
  RowVecMap<T> dbeta(beta_.grad.data(), dim_);
  const T d = static_cast<T>(dim_);
  for (Eigen::Index r = 0; r < gm.rows(); ++r) {
    dg.array() += gm.row(r).array() * hm.row(r).array();
    dbeta += gm.row(r);
    const Eigen::Matrix<T, 1, Eigen::Dynamic> dh = gm.row(r).array() * g.array();
    const T sum_dh = dh.sum();
    const T sum_dh_h = dh.dot(hm.row(r));
    dm.row(r) = (dh.array() * d - sum_dh - hm.row(r).array() * sum_dh_h) *
                (rstd_[static_cast<std::size_t>(r)] / d);
  }
  return dx;
}

template <typename T>
void LayerNorm<T>::collect(ParameterRefs<T>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

// ------------------------------------------------- MultiHeadSelfAttention

template <typename T>
MultiHeadSelfAttention<T>::MultiHeadSelfAttention(std::string name, std::size_t dim,
                                                  std::size_t heads, Rng& rng)
    : dim_(dim),
      heads_(heads),
      qkv_(name + ".qkv", dim, 3 * dim, rng, 1.0),
      proj_(name + ".proj", dim, dim, rng, 1.0) {
  if (heads == 0 || dim % heads != 0) throw ConfigError("MultiHeadSelfAttention: dim % heads != 0");
}

template <typename T>
Tensor<T> MultiHeadSelfAttention<T>::attend(const Tensor<T>& qkv, Tensor<T>* probs) const {
  const std::size_t n = qkv.dim(0), t = qkv.dim(1), dh = dim_ / heads_;
  const auto stride = static_cast<Eigen::Index>(3 * dim_);
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  using Strided = Eigen::Map<const MatrixRM<T>, 0, Eigen::OuterStride<>>;
  using StridedOut = Eigen::Map<MatrixRM<T>, 0, Eigen::OuterStride<>>;
  Tensor<T> ctx(Shape{n, t, dim_});
  if (probs) *probs = Tensor<T>(Shape{n, heads_, t, t});
  MatrixRM<T> scores(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(t));
  for (std::size_t s = 0; s < n; ++s) {
    const T* base = qkv.data() + s * t * 3 * dim_;
    for (std::size_t h = 0; h < heads_; ++h) {
      const Strided q(base + h * dh, t, dh, Eigen::OuterStride<>(stride));
      const Strided k(base + dim_ + h * dh, t, dh, Eigen::OuterStride<>(stride));
      const Strided v(base + 2 * dim_ + h * dh, t, dh, Eigen::OuterStride<>(stride));
      scores.noalias() = (q * k.transpose()) * scale;
      for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        const T mx = scores.row(r).maxCoeff();
        scores.row(r) = (scores.row(r).array() - mx).exp();
        scores.row(r) /= scores.row(r).sum();
      }
      StridedOut out(ctx.data() + s * t * dim_ + h * dh, t, dh,
                     Eigen::OuterStride<>(static_cast<Eigen::Index>(dim_)));
      out.noalias() = scores * v;
      if (probs) MatrixMap<T>(probs->data() + (s * heads_ + h) * t * t, t, t) = scores;
    }
  }
  return ctx;
}

template <typename T>
Tensor<T> MultiHeadSelfAttention<T>::forward(const Tensor<T>& x) const {
  require_rank(x.shape(), 3, "MultiHeadSelfAttention");
  return proj_.forward(attend(qkv_.forward(x), nullptr));
}

template <typename T>
Tensor<T> MultiHeadSelfAttention<T>::forward_train(const Tensor<T>& x) {
  require_rank(x.shape(), 3, "MultiHeadSelfAttention");
  qkv_out_ = qkv_.forward_train(x);
  return proj_.forward_train(attend(qkv_out_, &probs_));
}

template <typename T>
Tensor<T> MultiHeadSelfAttention<T>::backward(const Tensor<T>& dy) {
  const Tensor<T> dctx = proj_.backward(dy);
  const std::size_t n = qkv_out_.dim(0), t = qkv_out_.dim(1), dh = dim_ / heads_;
  const auto stride = static_cast<Eigen::Index>(3 * dim_);
  const auto dstride = static_cast<Eigen::Index>(dim_);
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  using Strided = Eigen::Map<const MatrixRM<T>, 0, Eigen::OuterStride<>>;
  using StridedOut = Eigen::Map<MatrixRM<T>, 0, Eigen::OuterStride<>>;
  Tensor<T> dqkv(qkv_out_.shape());
  MatrixRM<T> dp(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(t));
  for (std::size_t s = 0; s < n; ++s) {
    const T* base = qkv_out_.data() + s * t * 3 * dim_;
    T* dbase = dqkv.data() + s * t * 3 * dim_;
    for (std::size_t h = 0; h < heads_; ++h) {
      const Strided q(base + h * dh, t, dh, Eigen::OuterStride<>(stride));
      const Strided k(base + dim_ + h * dh, t, dh, Eigen::OuterStride<>(stride));
      const Strided v(base + 2 * dim_ + h * dh, t, dh, Eigen::OuterStride<>(stride));
      const Strided dout(dctx.data() + s * t * dim_ + h * dh, t, dh, Eigen::OuterStride<>(dstride));
      const ConstMatrixMap<T> p(probs_.data() + (s * heads_ + h) * t * t, t, t);
      StridedOut dq(dbase + h * dh, t, dh, Eigen::OuterStride<>(stride));
      StridedOut dk(dbase + dim_ + h * dh, t, dh, Eigen::OuterStride<>(stride));
      StridedOut dv(dbase + 2 * dim_ + h * dh, t, dh, Eigen::OuterStride<>(stride));
      dv.noalias() = p.transpose() * dout;
      dp.noalias() = dout * v.transpose();
      for (Eigen::Index r = 0; r < dp.rows(); ++r) {
        const T dot = dp.row(r).dot(p.row(r));
        dp.row(r) = p.row(r).array() * (dp.row(r).array() - dot);
      }
      dq.noalias() = (dp * k) * scale;
      dk.noalias() = (dp.transpose() * q) * scale;
    }
  }
  return qkv_.backward(dqkv);
}

template <typename T>
void MultiHeadSelfAttention<T>::collect(ParameterRefs<T>& out) {
  qkv_.collect(out);
  proj_.collect(out);
}

// ----------------------------------------------------------- Plumbing

template <typename T>
Tensor<T> pad_bottom_right(const Tensor<T>& x, std::size_t height, std::size_t width) {
  require_rank(x.shape(), 4, "pad_bottom_right");
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (height < h || width < w) throw ShapeError("pad_bottom_right: target smaller than input");
  if (height == h && width == w) return x;
  Tensor<T> y(Shape{n, height, width, c});
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < h; ++i) {
      std::memcpy(y.data() + ((s * height + i) * width) * c, x.data() + ((s * h + i) * w) * c,
                  w * c * sizeof(T));
    }
  }
  return y;
}

template <typename T>
Tensor<T> crop_top_left(const Tensor<T>& x, std::size_t height, std::size_t width) {
  require_rank(x.shape(), 4, "crop_top_left");
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (height > h || width > w) throw ShapeError("crop_top_left: target larger than input");
  if (height == h && width == w) return x;
  Tensor<T> y(Shape{n, height, width, c});
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < height; ++i) {
      std::memcpy(y.data() + ((s * height + i) * width) * c, x.data() + ((s * h + i) * w) * c,
                  width * c * sizeof(T));
    }
  }
  return y;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  Shape sa = a.shape(), sb = b.shape();
  if (sa.size() != sb.size() || sa.empty() ||
      !std::equal(sa.begin(), sa.end() - 1, sb.begin(), sb.end() - 1)) {
    throw ShapeError("concat_channels: " + shape_string(sa) + " vs " + shape_string(sb));
  }
  const std::size_t ca = sa.back(), cb = sb.back(), rows = a.rows();
  Shape so = sa;
  so.back() = ca + cb;
  Tensor<T> y(so);
  for (std::size_t r = 0; r < rows; ++r) {
    std::memcpy(y.data() + r * (ca + cb), a.data() + r * ca, ca * sizeof(T));
    std::memcpy(y.data() + r * (ca + cb) + ca, b.data() + r * cb, cb * sizeof(T));
  }
  return y;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, std::size_t first_channels) {
  const std::size_t c = x.cols(), rows = x.rows();
  if (first_channels > c) throw ShapeError("split_channels: split point beyond channel count");
  Shape sa = x.shape(), sb = x.shape();
  sa.back() = first_channels;
  sb.back() = c - first_channels;
  Tensor<T> a(sa), b(sb);
  for (std::size_t r = 0; r < rows; ++r) {
    std::memcpy(a.data() + r * first_channels, x.data() + r * c, first_channels * sizeof(T));
    std::memcpy(b.data() + r * (c - first_channels), x.data() + r * c + first_channels,
                (c - first_channels) * sizeof(T));
  }
  return {std::move(a), std::move(b)};
}

template <typename T>
void add_inplace(Tensor<T>& acc, const Tensor<T>& x) {
  if (acc.shape() != x.shape()) throw ShapeError("add_inplace: shape mismatch");
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += x[i];
}

#define QDBENCH_INSTANTIATE_LAYERS(T)                                                      \
  template void init_fan_in_uniform<T>(Tensor<T>&, std::size_t, double, Rng&);             \
  template void init_normal<T>(Tensor<T>&, double, Rng&);                                  \
  template class Linear<T>;                                                                \
  template class Conv2d<T>;                                                                \
  template class ConvTranspose2x2<T>;                                                      \
  template class MaxPool2x2<T>;                                                            \
  template class GlobalAvgPool<T>;                                                         \
  template class Dropout<T>;                                                               \
  template class Elementwise<T>;                                                           \
  template class Softmax<T>;                                                               \
  template class LayerNorm<T>;                                                             \
  template class MultiHeadSelfAttention<T>;                                                \
  template Tensor<T> pad_bottom_right<T>(const Tensor<T>&, std::size_t, std::size_t);      \
  template Tensor<T> crop_top_left<T>(const Tensor<T>&, std::size_t, std::size_t);         \
  template Tensor<T> concat_channels<T>(const Tensor<T>&, const Tensor<T>&);               \
  template std::pair<Tensor<T>, Tensor<T>> split_channels<T>(const Tensor<T>&, std::size_t); \
  template void add_inplace<T>(Tensor<T>&, const Tensor<T>&);

QDBENCH_INSTANTIATE_LAYERS(float)
QDBENCH_INSTANTIATE_LAYERS(double)

#undef QDBENCH_INSTANTIATE_LAYERS

}  // namespace qdbench::nn
