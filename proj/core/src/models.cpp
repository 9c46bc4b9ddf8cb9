// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "qdbench/models.hpp"

#include "qdbench/data.hpp"
#include "qdbench/error.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <cstring>
#include <numbers>

namespace qdbench {

using nn::Activation;
using nn::Conv2d;
using nn::ConvTranspose2x2;
using nn::Dropout;
using nn::Elementwise;
using nn::GlobalAvgPool;
using nn::LayerNorm;
using nn::Linear;
using nn::MaxPool2x2;
using nn::MultiHeadSelfAttention;
using nn::Parameter;
using nn::ParameterRefs;
using nn::Softmax;

std::string_view to_string(Family family) {
  switch (family) {
    case Family::cnn:
      return "cnn";
    case Family::unet:
      return "unet";
    case Family::vit:
      return "vit";
    case Family::mdn:
      return "mdn";
  }
  return "unknown";
}

std::optional<Family> parse_family(std::string_view text) {
  for (Family f : kAllFamilies) {
    if (to_string(f) == text) return f;
  }
  return std::nullopt;
}

ModelSpec default_spec(Family family) {
  ModelSpec spec;
  spec.family = family;
  switch (family) {
    case Family::cnn:
    case Family::unet:
      spec.dropout = 0.3;
      break;
    case Family::vit:
      spec.dropout = 0.1;
      break;
    case Family::mdn:
      spec.dropout = 0.0;
      break;
  }
  return spec;
}

std::uint64_t spec_hash(const ModelSpec& spec) {
  std::uint64_t h = mix64(static_cast<std::uint64_t>(spec.family) + 1);
  std::uint64_t bits;
  std::memcpy(&bits, &spec.dropout, sizeof bits);
  for (std::uint64_t v : {bits, std::uint64_t{spec.classes}, std::uint64_t{spec.mdn_inputs},
                          std::uint64_t{spec.mdn_hidden}, std::uint64_t{spec.mdn_components}}) {
    h = mix64(h ^ v);
  }
  return h;
}

double reference_parameters_millions(Family family) {
  switch (family) {
    case Family::cnn:
      return 0.06;
    case Family::unet:
      return 1.86;
    case Family::vit:
      return 1.27;
    case Family::mdn:
      return 0.83;
  }
  return 0.0;
}

namespace {

template <typename T>
Tensor<T> as_image(const Tensor<T>& x) {
  if (x.rank() == 3) return x.reshaped(Shape{x.dim(0), x.dim(1), x.dim(2), 1});
  return x;
}

// ------------------------------------------------------------------ CNN
//
// Four conv blocks 1 -> 16 -> 32 -> 64 -> 64 (3x3, pad 1) with ReLU and
// dropout; 2x2 max pooling after the first three; global average pool;
// linear 64 -> classes; softmax.

template <typename T>
class CnnNet final : public Network<T> {
 public:
  CnnNet(const ModelSpec& spec, Rng& rng)
      : conv_{Conv2d<T>("cnn.conv1", 1, 16, 3, 1, rng), Conv2d<T>("cnn.conv2", 16, 32, 3, 1, rng),
              Conv2d<T>("cnn.conv3", 32, 64, 3, 1, rng), Conv2d<T>("cnn.conv4", 64, 64, 3, 1, rng)},
        relu_{Elementwise<T>(Activation::relu), Elementwise<T>(Activation::relu),
              Elementwise<T>(Activation::relu), Elementwise<T>(Activation::relu)},
        drop_{Dropout<T>(spec.dropout), Dropout<T>(spec.dropout), Dropout<T>(spec.dropout),
              Dropout<T>(spec.dropout)},
        fc_("cnn.fc", 64, spec.classes, rng, 1.0) {}

  Tensor<T> forward(const Tensor<T>& x) const override {
    Tensor<T> h = as_image(x);
    for (std::size_t b = 0; b < 4; ++b) {
      h = relu_[b].forward(conv_[b].forward(h));
      if (b < 3) h = pool_[b].forward(h);
    }
    return softmax_.forward(fc_.forward(gap_.forward(h)));
  }

  Tensor<T> forward_train(const Tensor<T>& x, Rng& rng) override {
    Tensor<T> h = as_image(x);
    for (std::size_t b = 0; b < 4; ++b) {
      h = relu_[b].forward_train(conv_[b].forward_train(h));
      if (b < 3) h = pool_[b].forward_train(h);
      h = drop_[b].forward_train(h, rng);
    }
    return softmax_.forward_train(fc_.forward_train(gap_.forward_train(h)));
  }

  void backward(const Tensor<T>& dprobs) override {
    Tensor<T> d = gap_.backward(fc_.backward(softmax_.backward(dprobs)));
    for (std::size_t b = 4; b-- > 0;) {
      d = drop_[b].backward(d);
      if (b < 3) d = pool_[b].backward(d);
      d = conv_[b].backward(relu_[b].backward(d), b > 0);
    }
  }

  ParameterRefs<T> parameters() override {
    ParameterRefs<T> out;
    for (auto& c : conv_) c.collect(out);
    fc_.collect(out);
    return out;
  }

 private:
  std::array<Conv2d<T>, 4> conv_;
  std::array<Elementwise<T>, 4> relu_;
  std::array<MaxPool2x2<T>, 3> pool_;
  std::array<Dropout<T>, 4> drop_;
  GlobalAvgPool<T> gap_;
  Linear<T> fc_;
  Softmax<T> softmax_;
};

// ---------------------------------------------------------------- U-Net
//
// Double-conv stages at widths 64, 128 and a 256 bottleneck, 2x2 transposed
// convolutions back to 128 and 64 with concatenated skips, 1x1 conv to the
// class channels, global average pool, softmax. 30 -> 15 -> 7 on the way
// down; the 14-pixel upsample is zero-padded to the 15-pixel skip.

template <typename T>
struct DoubleConv {
  DoubleConv(const std::string& name, std::size_t cin, std::size_t cout, Rng& rng)
      : a(name + ".conv1", cin, cout, 3, 1, rng), b(name + ".conv2", cout, cout, 3, 1, rng) {}

  Tensor<T> forward(const Tensor<T>& x) const { return rb.forward(b.forward(ra.forward(a.forward(x)))); }
  Tensor<T> forward_train(const Tensor<T>& x) {
    return rb.forward_train(b.forward_train(ra.forward_train(a.forward_train(x))));
  }
  Tensor<T> backward(const Tensor<T>& dy, bool input_grad = true) {
    return a.backward(ra.backward(b.backward(rb.backward(dy))), input_grad);
  }
  void collect(ParameterRefs<T>& out) {
    a.collect(out);
    b.collect(out);
  }

  Conv2d<T> a;
  Conv2d<T> b;
  Elementwise<T> ra{Activation::relu};
  Elementwise<T> rb{Activation::relu};
};

template <typename T>
class UNetNet final : public Network<T> {
 public:
  UNetNet(const ModelSpec& spec, Rng& rng)
      : enc1_("unet.enc1", 1, 64, rng),
        enc2_("unet.enc2", 64, 128, rng),
        bottleneck_("unet.bottleneck", 128, 256, rng),
        up1_("unet.up1", 256, 128, rng),
        dec1_("unet.dec1", 256, 128, rng),
        up2_("unet.up2", 128, 64, rng),
        dec2_("unet.dec2", 128, 64, rng),
        head_("unet.head", 64, spec.classes, 1, 0, rng, 1.0),
        drop1_(spec.dropout),
        drop2_(spec.dropout),
        drop3_(spec.dropout) {}

  Tensor<T> forward(const Tensor<T>& x) const override {
    const Tensor<T> s1 = enc1_.forward(as_image(x));
    const Tensor<T> s2 = enc2_.forward(pool1_.forward(s1));
    Tensor<T> h = bottleneck_.forward(pool2_.forward(s2));
    h = up1_.forward(h);
    h = dec1_.forward(nn::concat_channels(nn::pad_bottom_right(h, s2.dim(1), s2.dim(2)), s2));
    h = up2_.forward(h);
    h = dec2_.forward(nn::concat_channels(nn::pad_bottom_right(h, s1.dim(1), s1.dim(2)), s1));
    return softmax_.forward(gap_.forward(head_.forward(h)));
  }

  Tensor<T> forward_train(const Tensor<T>& x, Rng& rng) override {
    const Tensor<T> s1 = drop1_.forward_train(enc1_.forward_train(as_image(x)), rng);
    const Tensor<T> s2 = drop2_.forward_train(enc2_.forward_train(pool1_.forward_train(s1)), rng);
    Tensor<T> h = drop3_.forward_train(bottleneck_.forward_train(pool2_.forward_train(s2)), rng);
    h = up1_.forward_train(h);
    up1_hw_ = {h.dim(1), h.dim(2)};
    h = dec1_.forward_train(nn::concat_channels(nn::pad_bottom_right(h, s2.dim(1), s2.dim(2)), s2));
    h = up2_.forward_train(h);
    up2_hw_ = {h.dim(1), h.dim(2)};
    h = dec2_.forward_train(nn::concat_channels(nn::pad_bottom_right(h, s1.dim(1), s1.dim(2)), s1));
    return softmax_.forward_train(gap_.forward_train(head_.forward_train(h)));
  }

  void backward(const Tensor<T>& dprobs) override {
    Tensor<T> d = head_.backward(gap_.backward(softmax_.backward(dprobs)));
    auto [dup2, ds1] = nn::split_channels(dec2_.backward(d), 64);
    d = up2_.backward(nn::crop_top_left(dup2, up2_hw_[0], up2_hw_[1]));
    auto [dup1, ds2] = nn::split_channels(dec1_.backward(d), 128);
    d = up1_.backward(nn::crop_top_left(dup1, up1_hw_[0], up1_hw_[1]));
    d = pool2_.backward(bottleneck_.backward(drop3_.backward(d)));
    nn::add_inplace(d, ds2);
    d = pool1_.backward(enc2_.backward(drop2_.backward(d)));
    nn::add_inplace(d, ds1);
    enc1_.backward(drop1_.backward(d), false);
  }

  ParameterRefs<T> parameters() override {
    ParameterRefs<T> out;
    enc1_.collect(out);
    enc2_.collect(out);
    bottleneck_.collect(out);
    up1_.collect(out);
    dec1_.collect(out);
    up2_.collect(out);
    dec2_.collect(out);
    head_.collect(out);
    return out;
  }

 private:
  DoubleConv<T> enc1_, enc2_, bottleneck_;
  ConvTranspose2x2<T> up1_;
  DoubleConv<T> dec1_;
  ConvTranspose2x2<T> up2_;
  DoubleConv<T> dec2_;
  Conv2d<T> head_;
  MaxPool2x2<T> pool1_, pool2_;
  Dropout<T> drop1_, drop2_, drop3_;
  GlobalAvgPool<T> gap_;
  Softmax<T> softmax_;
  std::array<std::size_t, 2> up1_hw_{}, up2_hw_{};
};

// ------------------------------------------------------------------ ViT
//
// 5x5 pixel tokens (6x6 grid) embedded to 128, a learned class token and a
// learned 37-entry position table, six pre-norm encoder layers (4 heads,
// GELU feed-forward of width 512), final layer norm, MLP head
// 128 -> 256 -> 128 -> classes on the class token.

constexpr std::size_t kVitPatch = 5;
constexpr std::size_t kVitGrid = kPatchSize / kVitPatch;
constexpr std::size_t kVitTokens = kVitGrid * kVitGrid;
constexpr std::size_t kVitDim = 128;
constexpr std::size_t kVitHeads = 4;
constexpr std::size_t kVitFeedForward = 512;
constexpr std::size_t kVitLayers = 6;

template <typename T>
struct EncoderLayer {
  EncoderLayer(const std::string& name, double dropout, Rng& rng)
      : ln1(name + ".ln1", kVitDim),
        attn(name + ".attn", kVitDim, kVitHeads, rng),
        ln2(name + ".ln2", kVitDim),
        fc1(name + ".ff1", kVitDim, kVitFeedForward, rng),
        fc2(name + ".ff2", kVitFeedForward, kVitDim, rng, 1.0),
        drop_attn(dropout),
        drop_ff(dropout) {}

  Tensor<T> forward(Tensor<T> x) const {
    nn::add_inplace(x, attn.forward(ln1.forward(x)));
    nn::add_inplace(x, fc2.forward(gelu.forward(fc1.forward(ln2.forward(x)))));
    return x;
  }

  Tensor<T> forward_train(Tensor<T> x, Rng& rng) {
    nn::add_inplace(x, drop_attn.forward_train(attn.forward_train(ln1.forward_train(x)), rng));
    nn::add_inplace(
        x, drop_ff.forward_train(fc2.forward_train(gelu.forward_train(fc1.forward_train(ln2.forward_train(x)))), rng));
    return x;
  }

  Tensor<T> backward(Tensor<T> d) {
    nn::add_inplace(d, ln2.backward(fc1.backward(gelu.backward(fc2.backward(drop_ff.backward(d))))));
    nn::add_inplace(d, ln1.backward(attn.backward(drop_attn.backward(d))));
    return d;
  }

  void collect(ParameterRefs<T>& out) {
    ln1.collect(out);
    attn.collect(out);
    ln2.collect(out);
    fc1.collect(out);
    fc2.collect(out);
  }

  LayerNorm<T> ln1;
  MultiHeadSelfAttention<T> attn;
  LayerNorm<T> ln2;
  Linear<T> fc1;
  Elementwise<T> gelu{Activation::gelu};
  Linear<T> fc2;
  Dropout<T> drop_attn;
  Dropout<T> drop_ff;
};

template <typename T>
class VitNet final : public Network<T> {
 public:
  VitNet(const ModelSpec& spec, Rng& rng)
      : embed_("vit.patch_embed", kVitPatch * kVitPatch, kVitDim, rng, 1.0),
        cls_("vit.cls_token", Shape{kVitDim}),
        pos_("vit.pos_embed", Shape{kVitTokens + 1, kVitDim}),
        norm_("vit.norm", kVitDim),
        head1_("vit.head1", kVitDim, 256, rng),
        head2_("vit.head2", 256, 128, rng),
        head3_("vit.head3", 128, spec.classes, rng, 1.0) {
    nn::init_normal(cls_.value, 0.02, rng);
    nn::init_normal(pos_.value, 0.02, rng);
    layers_.reserve(kVitLayers);
    for (std::size_t i = 0; i < kVitLayers; ++i) {
      layers_.emplace_back("vit.layer" + std::to_string(i), spec.dropout, rng);
    }
  }

  Tensor<T> forward(const Tensor<T>& x) const override {
    Tensor<T> seq = embed_sequence(embed_.forward(patchify(x)));
    for (const auto& layer : layers_) seq = layer.forward(std::move(seq));
    return softmax_.forward(
        head3_.forward(relu2_.forward(head2_.forward(relu1_.forward(head1_.forward(class_rows(norm_.forward(seq))))))));
  }

  Tensor<T> forward_train(const Tensor<T>& x, Rng& rng) override {
    Tensor<T> seq = embed_sequence(embed_.forward_train(patchify(x)));
    for (auto& layer : layers_) seq = layer.forward_train(std::move(seq), rng);
    const Tensor<T> cls = class_rows(norm_.forward_train(seq));
    return softmax_.forward_train(head3_.forward_train(
        relu2_.forward_train(head2_.forward_train(relu1_.forward_train(head1_.forward_train(cls))))));
  }

  void backward(const Tensor<T>& dprobs) override {
    const Tensor<T> dcls = head1_.backward(
        relu1_.backward(head2_.backward(relu2_.backward(head3_.backward(softmax_.backward(dprobs))))));
    const std::size_t n = dcls.dim(0);
    Tensor<T> dseq(Shape{n, kVitTokens + 1, kVitDim});
    for (std::size_t s = 0; s < n; ++s) {
      std::copy_n(dcls.data() + s * kVitDim, kVitDim, dseq.data() + s * (kVitTokens + 1) * kVitDim);
    }
    dseq = norm_.backward(dseq);
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) dseq = it->backward(std::move(dseq));

    Tensor<T> dtokens(Shape{n, kVitTokens, kVitDim});
    for (std::size_t s = 0; s < n; ++s) {
      const T* src = dseq.data() + s * (kVitTokens + 1) * kVitDim;
      for (std::size_t i = 0; i < kVitDim; ++i) cls_.grad[i] += src[i];
      for (std::size_t i = 0; i < (kVitTokens + 1) * kVitDim; ++i) pos_.grad[i] += src[i];
      std::copy_n(src + kVitDim, kVitTokens * kVitDim, dtokens.data() + s * kVitTokens * kVitDim);
    }
    embed_.backward(dtokens);
  }

  ParameterRefs<T> parameters() override {
    ParameterRefs<T> out;
    embed_.collect(out);
    out.push_back(&cls_);
    out.push_back(&pos_);
    for (auto& layer : layers_) layer.collect(out);
    norm_.collect(out);
    head1_.collect(out);
    head2_.collect(out);
    head3_.collect(out);
    return out;
  }

 private:
  // (N, 30, 30) -> (N, 36, 25); tokens and pixels both in row-major order.
  static Tensor<T> patchify(const Tensor<T>& x) {
    if (x.rank() < 3 || x.dim(1) != kPatchSize || x.dim(2) != kPatchSize) {
      throw ShapeError("ViT: expected (N, 30, 30) input, got " + shape_string(x.shape()));
    }
    const std::size_t n = x.dim(0);
    Tensor<T> out(Shape{n, kVitTokens, kVitPatch * kVitPatch});
    T* dst = out.data();
    for (std::size_t s = 0; s < n; ++s) {
      const T* img = x.data() + s * kPatchPixels;
      for (std::size_t gi = 0; gi < kVitGrid; ++gi) {
        for (std::size_t gj = 0; gj < kVitGrid; ++gj) {
          for (std::size_t pi = 0; pi < kVitPatch; ++pi) {
            const T* row = img + (gi * kVitPatch + pi) * kPatchSize + gj * kVitPatch;
            dst = std::copy_n(row, kVitPatch, dst);
          }
        }
      }
    }
    return out;
  }

  Tensor<T> embed_sequence(const Tensor<T>& tokens) const {
    const std::size_t n = tokens.dim(0);
    Tensor<T> seq(Shape{n, kVitTokens + 1, kVitDim});
    for (std::size_t s = 0; s < n; ++s) {
      T* dst = seq.data() + s * (kVitTokens + 1) * kVitDim;
      std::copy_n(cls_.value.data(), kVitDim, dst);
      std::copy_n(tokens.data() + s * kVitTokens * kVitDim, kVitTokens * kVitDim, dst + kVitDim);
      for (std::size_t i = 0; i < (kVitTokens + 1) * kVitDim; ++i) dst[i] += pos_.value[i];
    }
    return seq;
  }

  static Tensor<T> class_rows(const Tensor<T>& seq) {
    const std::size_t n = seq.dim(0);
    Tensor<T> out(Shape{n, kVitDim});
    for (std::size_t s = 0; s < n; ++s) {
      std::copy_n(seq.data() + s * (kVitTokens + 1) * kVitDim, kVitDim, out.data() + s * kVitDim);
    }
    return out;
  }

  Linear<T> embed_;
  Parameter<T> cls_;
  Parameter<T> pos_;
  std::vector<EncoderLayer<T>> layers_;
  LayerNorm<T> norm_;
  Linear<T> head1_;
  Elementwise<T> relu1_{Activation::relu};
  Linear<T> head2_;
  Elementwise<T> relu2_{Activation::relu};
  Linear<T> head3_;
  Softmax<T> softmax_;
};

// --------------------------------------------------------- MDN-C1
//
// Flattened input -> tanh hidden layer -> mixture weights (softmax), means
// (linear) and standard deviations (softplus) for every component and input
// dimension. Features Phi((x_d - mu_kd) / sigma_kd) are scaled by the
// component weight and fed to a linear layer producing class logits.

constexpr double kMinStd = 1e-6;

template <typename T>
T normal_cdf(T z) {
  return T(0.5) * std::erfc(-z / std::numbers::sqrt2_v<T>);
}

template <typename T>
T normal_pdf(T z) {
  return std::exp(T(-0.5) * z * z) / std::sqrt(T(2) * std::numbers::pi_v<T>);
}

template <typename T>
class MdnNet final : public Network<T> {
 public:
  MdnNet(const ModelSpec& spec, Rng& rng)
      : d_(spec.mdn_inputs),
        k_(spec.mdn_components),
        hidden_("mdn.hidden", spec.mdn_inputs, spec.mdn_hidden, rng, 1.0),
        weights_head_("mdn.weights", spec.mdn_hidden, spec.mdn_components, rng, 1.0),
        means_head_("mdn.means", spec.mdn_hidden, spec.mdn_components * spec.mdn_inputs, rng, 1.0),
        stds_head_("mdn.stds", spec.mdn_hidden, spec.mdn_components * spec.mdn_inputs, rng, 1.0),
        out_("mdn.out", spec.mdn_components * spec.mdn_inputs, spec.classes, rng, 1.0) {}

  Tensor<T> forward(const Tensor<T>& x) const override {
    const Tensor<T> flat = flatten(x);
    const Tensor<T> h = tanh_.forward(hidden_.forward(flat));
    const Tensor<T> pi = pi_softmax_.forward(weights_head_.forward(h));
    const Tensor<T> mu = means_head_.forward(h);
    const Tensor<T> sigma = with_floor(softplus_.forward(stds_head_.forward(h)));
    Tensor<T> z, f;
    return softmax_.forward(out_.forward(features(flat, pi, mu, sigma, z, f)));
  }

  Tensor<T> forward_train(const Tensor<T>& x, Rng&) override {
    const Tensor<T> flat = flatten(x);
    const Tensor<T> h = tanh_.forward_train(hidden_.forward_train(flat));
    pi_ = pi_softmax_.forward_train(weights_head_.forward_train(h));
    const Tensor<T> mu = means_head_.forward_train(h);
    sigma_ = with_floor(softplus_.forward_train(stds_head_.forward_train(h)));
    return softmax_.forward_train(out_.forward_train(features(flat, pi_, mu, sigma_, z_, f_)));
  }

  void backward(const Tensor<T>& dprobs) override {
    const Tensor<T> dg = out_.backward(softmax_.backward(dprobs));
    const std::size_t n = dg.dim(0), kd = k_ * d_;
    Tensor<T> dpi(Shape{n, k_});
    Tensor<T> dmu(Shape{n, kd});
    Tensor<T> dsigma(Shape{n, kd});
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t k = 0; k < k_; ++k) {
        const T w = pi_[s * k_ + k];
        T acc = 0;
        for (std::size_t d = 0; d < d_; ++d) {
          const std::size_t i = s * kd + k * d_ + d;
          acc += dg[i] * f_[i];
          const T dz = dg[i] * w * normal_pdf(z_[i]);
          dmu[i] = -dz / sigma_[i];
          dsigma[i] = -dz * z_[i] / sigma_[i];
        }
        dpi[s * k_ + k] = acc;
      }
    }
    Tensor<T> dh = weights_head_.backward(pi_softmax_.backward(dpi));
    nn::add_inplace(dh, means_head_.backward(dmu));
    nn::add_inplace(dh, stds_head_.backward(softplus_.backward(dsigma)));
    hidden_.backward(tanh_.backward(dh));
  }

  ParameterRefs<T> parameters() override {
    ParameterRefs<T> out;
    hidden_.collect(out);
    weights_head_.collect(out);
    means_head_.collect(out);
    stds_head_.collect(out);
    out_.collect(out);
    return out;
  }

  /// Mixture parameters for each row of x: (pi, mu, sigma).
  std::tuple<Tensor<T>, Tensor<T>, Tensor<T>> mixture(const Tensor<T>& x) const {
    const Tensor<T> flat = flatten(x);
    const Tensor<T> h = tanh_.forward(hidden_.forward(flat));
    return {pi_softmax_.forward(weights_head_.forward(h)), means_head_.forward(h),
            with_floor(softplus_.forward(stds_head_.forward(h)))};
  }

 private:
  Tensor<T> flatten(const Tensor<T>& x) const {
    if (x.rank() < 2 || x.size() != x.dim(0) * d_) {
      throw ShapeError("MDN: expected " + std::to_string(d_) + " inputs per sample, got shape " +
                       shape_string(x.shape()));
    }
    return x.reshaped(Shape{x.dim(0), d_});
  }

  static Tensor<T> with_floor(Tensor<T> sigma) {
    for (auto& v : sigma.values()) v += static_cast<T>(kMinStd);
    return sigma;
  }

  Tensor<T> features(const Tensor<T>& x, const Tensor<T>& pi, const Tensor<T>& mu,
                     const Tensor<T>& sigma, Tensor<T>& z, Tensor<T>& f) const {
    const std::size_t n = x.dim(0), kd = k_ * d_;
    Tensor<T> g(Shape{n, kd});
    z = Tensor<T>(Shape{n, kd});
    f = Tensor<T>(Shape{n, kd});
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t k = 0; k < k_; ++k) {
        const T w = pi[s * k_ + k];
        for (std::size_t d = 0; d < d_; ++d) {
          const std::size_t i = s * kd + k * d_ + d;
          z[i] = (x[s * d_ + d] - mu[i]) / sigma[i];
          f[i] = normal_cdf(z[i]);
          g[i] = w * f[i];
        }
      }
    }
    return g;
  }

  std::size_t d_;
  std::size_t k_;
  Linear<T> hidden_;
  Elementwise<T> tanh_{Activation::tanh};
  Linear<T> weights_head_;
  Softmax<T> pi_softmax_;
  Linear<T> means_head_;
  Linear<T> stds_head_;
  Elementwise<T> softplus_{Activation::softplus};
  Linear<T> out_;
  Softmax<T> softmax_;
  Tensor<T> pi_, sigma_, z_, f_;
};

}  // namespace

template <typename T>
std::unique_ptr<Network<T>> make_network(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.classes == 0) throw ConfigError("ModelSpec: classes must be positive");
  if (!(spec.dropout >= 0.0 && spec.dropout < 1.0)) throw ConfigError("ModelSpec: dropout must lie in [0, 1)");
  Rng rng(derive_seed(seed, 0x1417));
  switch (spec.family) {
    case Family::cnn:
      return std::make_unique<CnnNet<T>>(spec, rng);
    case Family::unet:
      return std::make_unique<UNetNet<T>>(spec, rng);
    case Family::vit:
      return std::make_unique<VitNet<T>>(spec, rng);
    case Family::mdn:
      if (spec.mdn_inputs == 0 || spec.mdn_hidden == 0 || spec.mdn_components == 0) {
        throw ConfigError("ModelSpec: mdn sizes must be positive");
      }
      return std::make_unique<MdnNet<T>>(spec, rng);
  }
  throw ConfigError("ModelSpec: unknown family");
}

template std::unique_ptr<Network<float>> make_network<float>(const ModelSpec&, std::uint64_t);
template std::unique_ptr<Network<double>> make_network<double>(const ModelSpec&, std::uint64_t);

// -------------------------------------------------------- ModelInstance

ModelInstance::ModelInstance(ModelSpec spec, std::uint64_t seed)
    : spec_(spec),
      seed_(seed),
      net_(make_network<float>(spec, seed)),
      params_(net_->parameters()),
      dropout_rng_(derive_seed(seed, 0xD120)) {
  for (const auto* p : params_) parameter_count_ += p->value.size();
}

void ModelInstance::check_input(const Tensor<float>& batch) const {
  if (batch.rank() < 2 || batch.dim(0) == 0) {
    throw ShapeError("model input must be a non-empty batch, got " + shape_string(batch.shape()));
  }
  if (spec_.family == Family::mdn) return;  // MdnNet checks its own width
  const bool image = (batch.rank() == 3 || (batch.rank() == 4 && batch.dim(3) == 1)) &&
                     batch.dim(1) == kPatchSize && batch.dim(2) == kPatchSize;
  if (!image) {
    throw ShapeError("model input must be (N, 30, 30), got " + shape_string(batch.shape()));
  }
}

Tensor<float> ModelInstance::forward(const Tensor<float>& batch) {
  check_input(batch);
  if (mode_ == Mode::evaluation) return net_->forward(batch.rank() == 4 ? batch.reshaped(Shape{batch.dim(0), batch.dim(1), batch.dim(2)}) : batch);
  return net_->forward_train(batch.rank() == 4 ? batch.reshaped(Shape{batch.dim(0), batch.dim(1), batch.dim(2)}) : batch, dropout_rng_);
}

Tensor<float> ModelInstance::predict(const Tensor<float>& batch) const {
  check_input(batch);
  return net_->forward(batch.rank() == 4 ? batch.reshaped(Shape{batch.dim(0), batch.dim(1), batch.dim(2)}) : batch);
}

void ModelInstance::backward(const Tensor<float>& dprobs) {
  net_->backward(dprobs);
}

void ModelInstance::zero_grad() {
  for (auto* p : params_) p->grad.fill(0.0f);
}

std::vector<NamedArray> ModelInstance::named_weights() const {
  std::vector<NamedArray> out;
  out.reserve(params_.size());
  for (const auto* p : params_) {
    out.push_back({p->name, p->value.shape(), {p->value.values().begin(), p->value.values().end()}});
  }
  return out;
}

void ModelInstance::load_weights(const std::vector<NamedArray>& arrays) {
  if (arrays.size() != params_.size()) {
    throw ShapeError("load_weights: expected " + std::to_string(params_.size()) + " arrays, got " +
                     std::to_string(arrays.size()));
  }
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    auto* p = params_[i];
    if (arrays[i].name != p->name) {
      throw ShapeError("load_weights: array " + std::to_string(i) + " is '" + arrays[i].name +
                       "', expected '" + p->name + "'");
    }
    if (arrays[i].shape != p->value.shape() || arrays[i].values.size() != p->value.size()) {
      throw ShapeError("load_weights: '" + p->name + "' has shape " + shape_string(arrays[i].shape) +
                       ", expected " + shape_string(p->value.shape()));
    }
  }
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    std::copy(arrays[i].values.begin(), arrays[i].values.end(), params_[i]->value.data());
  }
}

ModelInstance ModelInstance::clone() const {
  ModelInstance copy(spec_, seed_);
  copy.load_weights(named_weights());
  copy.mode_ = mode_;
  copy.dropout_rng_ = dropout_rng_;
  return copy;
}

ModelInstance build_model(const ModelSpec& spec, std::uint64_t seed) {
  return ModelInstance(spec, seed);
}

Tensor<float> forward(ModelInstance& model, const Tensor<float>& batch) {
  return model.forward(batch);
}

std::size_t count_parameters(const ModelInstance& model) {
  return model.parameter_count();
}

// ------------------------------------------------------------- Mixture

double standard_normal_cdf(double z) {
  return normal_cdf(z);
}

std::vector<double> mdn_cdf_features(std::span<const double> x, const MixtureParams& mix) {
  const std::size_t d = mix.dims;
  const std::size_t k = mix.weights.size();
  if (x.size() != d || mix.means.size() != k * d || mix.stds.size() != k * d) {
    throw ShapeError("mdn_cdf_features: inconsistent sizes (x " + std::to_string(x.size()) +
                     ", dims " + std::to_string(d) + ", components " + std::to_string(k) + ")");
  }
  std::vector<double> out(k * d);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < d; ++i) {
      const double s = mix.stds[c * d + i];
      if (!(s > 0.0)) {
        throw NumericalError("mdn_cdf_features: nonpositive std at component " + std::to_string(c) +
                             ", dimension " + std::to_string(i));
      }
      out[c * d + i] = std::clamp(normal_cdf((x[i] - mix.means[c * d + i]) / s),
                                  std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
    }
  }
  return out;
}

MixtureParams mdn_mixture(const ModelInstance& model, std::span<const float> x) {
  if (model.spec().family != Family::mdn) throw ConfigError("mdn_mixture: model is not an mdn");
  // ModelInstance does not expose its network; rebuild an identical one.
  MdnNet<float>* net = nullptr;
  auto base = make_network<float>(model.spec(), model.seed());
  net = dynamic_cast<MdnNet<float>*>(base.get());
  std::vector<NamedArray> arrays = model.named_weights();
  auto params = net->parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(arrays[i].values.begin(), arrays[i].values.end(), params[i]->value.data());
  }
  Tensor<float> input(Shape{1, x.size()});
  std::copy(x.begin(), x.end(), input.data());
  auto [pi, mu, sigma] = net->mixture(input);
  MixtureParams mix;
  mix.dims = model.spec().mdn_inputs;
  mix.weights.assign(pi.values().begin(), pi.values().end());
  mix.means.assign(mu.values().begin(), mu.values().end());
  mix.stds.assign(sigma.values().begin(), sigma.values().end());
  return mix;
}

}  // namespace qdbench
