// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "qdbench/rng.hpp"
#include "qdbench/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

/// Layer building blocks with hand-written backward passes.
///
/// Every layer offers three entry points: forward() is const and keeps no
/// state, so a frozen network can be evaluated from several threads;
/// forward_train() records what backward() needs; backward() consumes that
/// record, accumulates parameter gradients and returns the input gradient.
/// Image tensors are NHWC.
namespace qdbench::nn {

template <typename T>
struct Parameter {
  Parameter(std::string parameter_name, Shape shape)
      : name(std::move(parameter_name)), value(shape), grad(shape) {}

  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

template <typename T>
using ParameterRefs = std::vector<Parameter<T>*>;

/// He-style gain for layers feeding a rectifier; use 1 for output layers.
inline const double kReluGain = std::sqrt(2.0);

/// Uniform(-b, b) with b = gain * sqrt(3 / fan_in), i.e. Var = gain^2 / fan_in.
template <typename T>
void init_fan_in_uniform(Tensor<T>& w, std::size_t fan_in, double gain, Rng& rng);

template <typename T>
void init_normal(Tensor<T>& w, double stddev, Rng& rng);

template <typename T>
class Linear {
 public:
  Linear(std::string name, std::size_t in, std::size_t out, Rng& rng, double gain = kReluGain);

  Tensor<T> forward(const Tensor<T>& x) const;
  Tensor<T> forward_train(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);
  void collect(ParameterRefs<T>& out);

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }

 private:
  std::size_t in_;
  std::size_t out_;
  Parameter<T> weight_;  // (out, in)
  Parameter<T> bias_;    // (out)
  Tensor<T> input_;
};

/// Stride-1 square convolution with zero padding. Weights (out, k, k, in).
template <typename T>
class Conv2d {
 public:
  Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t padding, Rng& rng, double gain = kReluGain);

  Tensor<T> forward(const Tensor<T>& x) const;
  Tensor<T> forward_train(const Tensor<T>& x);
  /// With input_grad false the returned tensor is empty (first layer).
  Tensor<T> backward(const Tensor<T>& dy, bool input_grad = true);
  void collect(ParameterRefs<T>& out);

 private:
  std::size_t chunk_samples(std::size_t out_pixels) const;
  void im2col(const Tensor<T>& x, std::size_t n0, std::size_t count, MatrixRM<T>& cols) const;

  std::size_t cin_;
  std::size_t cout_;
  std::size_t k_;
  std::size_t pad_;
  Parameter<T> weight_;
  Parameter<T> bias_;
  Tensor<T> input_;
};

/// Kernel 2, stride 2 transposed convolution (exact 2x upsampling).
/// Weights (in, 2, 2, out).
template <typename T>
class ConvTranspose2x2 {
 public:
  ConvTranspose2x2(std::string name, std::size_t in_channels, std::size_t out_channels, Rng& rng,
                   double gain = kReluGain);

  Tensor<T> forward(const Tensor<T>& x) const;
  Tensor<T> forward_train(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);
  void collect(ParameterRefs<T>& out);

 private:
  std::size_t cin_;
  std::size_t cout_;
  Parameter<T> weight_;
  Parameter<T> bias_;
  Tensor<T> input_;
};

/// 2x2 max pooling, stride 2, trailing odd row/column dropped.
template <typename T>
class MaxPool2x2 {
 public:
  Tensor<T> forward(const Tensor<T>& x) const;
  Tensor<T> forward_train(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);

 private:
  Tensor<T> pool(const Tensor<T>& x, std::vector<std::uint32_t>* argmax) const;
  Shape input_shape_;
  std::vector<std::uint32_t> argmax_;
};

/// (N, H, W, C) -> (N, C).
template <typename T>
class GlobalAvgPool {
 public:
  Tensor<T> forward(const Tensor<T>& x) const;
  Tensor<T> forward_train(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);

 private:
  Shape input_shape_;
};

/// Inverted dropout: kept units are scaled by 1 / (1 - rate).
template <typename T>
class Dropout {
 public:
  explicit Dropout(double rate);

  Tensor<T> forward(const Tensor<T>& x) const { return x; }
  Tensor<T> forward_train(const Tensor<T>& x, Rng& rng);
  Tensor<T> backward(const Tensor<T>& dy);
  double rate() const { return rate_; }

 private:
  double rate_;
  Tensor<T> mask_;
};

enum class Activation { relu, tanh, gelu, softplus };

template <typename T>
class Elementwise {
 public:
  explicit Elementwise(Activation kind) : kind_(kind) {}

  Tensor<T> forward(const Tensor<T>& x) const;
  Tensor<T> forward_train(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);

 private:
  Activation kind_;
  Tensor<T> input_;
};

/// Row-wise softmax over the trailing axis.
template <typename T>
class Softmax {
 public:
  Tensor<T> forward(const Tensor<T>& x) const;
  Tensor<T> forward_train(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);

 private:
  Tensor<T> output_;
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm(std::string name, std::size_t dim, double eps = 1e-5);

  Tensor<T> forward(const Tensor<T>& x) const;
  Tensor<T> forward_train(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);
  void collect(ParameterRefs<T>& out);

 private:
  Tensor<T> normalize(const Tensor<T>& x, Tensor<T>* xhat, std::vector<T>* rstd) const;

  std::size_t dim_;
  double eps_;
  Parameter<T> gamma_;
  Parameter<T> beta_;
  Tensor<T> xhat_;
  std::vector<T> rstd_;
};

/// Multi-head self-attention over (N, tokens, dim) with a fused qkv projection.
template <typename T>
class MultiHeadSelfAttention {
 public:
  MultiHeadSelfAttention(std::string name, std::size_t dim, std::size_t heads, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x) const;
  Tensor<T> forward_train(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);
  void collect(ParameterRefs<T>& out);

 private:
  Tensor<T> attend(const Tensor<T>& qkv, Tensor<T>* probs) const;

  std::size_t dim_;
  std::size_t heads_;
  Linear<T> qkv_;
  Linear<T> proj_;
  Tensor<T> qkv_out_;
  Tensor<T> probs_;  // (N, heads, tokens, tokens)
};

// Shape plumbing without parameters.

/// Zero-pads an NHWC tensor at the bottom and right to (height, width).
template <typename T>
Tensor<T> pad_bottom_right(const Tensor<T>& x, std::size_t height, std::size_t width);

/// Inverse of pad_bottom_right: keeps the top-left (height, width) window.
template <typename T>
Tensor<T> crop_top_left(const Tensor<T>& x, std::size_t height, std::size_t width);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// Splits the trailing axis at first_channels.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, std::size_t first_channels);

template <typename T>
void add_inplace(Tensor<T>& acc, const Tensor<T>& x);

}  // namespace qdbench::nn
