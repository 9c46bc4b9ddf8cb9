// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "qdbench/nn/layers.hpp"
#include "qdbench/rng.hpp"
#include "qdbench/tensor.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qdbench {

enum class Family { cnn, unet, vit, mdn };

inline constexpr std::array<Family, 4> kAllFamilies = {Family::cnn, Family::unet, Family::vit,
                                                       Family::mdn};

std::string_view to_string(Family family);
std::optional<Family> parse_family(std::string_view text);

/// Architecture description. Layer widths are fixed per family; only the
/// dropout rate and, for the mixture-density model, the input/hidden/mixture
/// sizes are adjustable (the latter for gradient checks on reduced models).
struct ModelSpec {
  Family family = Family::cnn;
  double dropout = 0.3;
  std::size_t classes = 5;
  std::size_t mdn_inputs = 900;
  std::size_t mdn_hidden = 128;
  std::size_t mdn_components = 3;

  bool operator==(const ModelSpec&) const = default;
};

/// Default spec: dropout 0.3 for cnn/unet, 0.1 for vit, 0 for mdn.
ModelSpec default_spec(Family family);

/// Stable 64-bit digest of every spec field, stored in checkpoints.
std::uint64_t spec_hash(const ModelSpec& spec);

/// Reference trainable-parameter budget per family, in millions.
double reference_parameters_millions(Family family);

enum class Mode { training, evaluation };

/// A network maps an input batch to N x classes probabilities (final softmax).
template <typename T>
class Network {
 public:
  virtual ~Network() = default;

  /// Evaluation pass. Const and cache-free.
  virtual Tensor<T> forward(const Tensor<T>& x) const = 0;
  /// Training pass: dropout active, activations recorded for backward().
  virtual Tensor<T> forward_train(const Tensor<T>& x, Rng& dropout_rng) = 0;
  /// Accumulates parameter gradients from dL/d(probabilities).
  virtual void backward(const Tensor<T>& dprobs) = 0;
  virtual nn::ParameterRefs<T> parameters() = 0;
};

/// Builds the family's network with weights drawn from seed.
template <typename T>
std::unique_ptr<Network<T>> make_network(const ModelSpec& spec, std::uint64_t seed);

/// A weight array by name, as stored in checkpoints.
struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

/// Single-precision network plus its spec, seed and train/eval mode.
class ModelInstance {
 public:
  ModelInstance(ModelSpec spec, std::uint64_t seed);

  ModelInstance(ModelInstance&&) noexcept = default;
  ModelInstance& operator=(ModelInstance&&) noexcept = default;

  const ModelSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  Mode mode() const { return mode_; }
  void set_mode(Mode mode) { mode_ = mode; }

  /// Input (N, 30, 30) for image families; (N, mdn_inputs) for a reduced
  /// mixture model. Output (N, 5). Uses the current mode.
  Tensor<float> forward(const Tensor<float>& batch);
  /// Evaluation-mode pass that never mutates the instance.
  Tensor<float> predict(const Tensor<float>& batch) const;
  void backward(const Tensor<float>& dprobs);
  void zero_grad();

  nn::ParameterRefs<float>& parameters() { return params_; }
  std::size_t parameter_count() const { return parameter_count_; }

  std::vector<NamedArray> named_weights() const;
  /// Replaces all weights; names and shapes must match exactly.
  void load_weights(const std::vector<NamedArray>& arrays);

  /// Deep copy (weights, mode and dropout stream).
  ModelInstance clone() const;

 private:
  void check_input(const Tensor<float>& batch) const;

  ModelSpec spec_;
  std::uint64_t seed_;
  Mode mode_ = Mode::evaluation;
  std::unique_ptr<Network<float>> net_;
  nn::ParameterRefs<float> params_;
  std::size_t parameter_count_ = 0;
  Rng dropout_rng_;
};

ModelInstance build_model(const ModelSpec& spec, std::uint64_t seed);
Tensor<float> forward(ModelInstance& model, const Tensor<float>& batch);
std::size_t count_parameters(const ModelInstance& model);

/// Predicted Gaussian mixture over the flattened patch (component-major).
struct MixtureParams {
  std::vector<double> weights;  ///< K, on the simplex
  std::size_t dims = 0;         ///< D
  std::vector<double> means;    ///< K x D
  std::vector<double> stds;     ///< K x D, strictly positive
};

double standard_normal_cdf(double z);

/// feature[k * D + d] = Phi((x_d - mean_kd) / std_kd), kept inside the open
/// interval where double rounding would reach 0 or 1. Throws NumericalError
/// on a nonpositive std and ShapeError on inconsistent sizes.
std::vector<double> mdn_cdf_features(std::span<const double> x, const MixtureParams& mix);

/// Mixture parameters the mixture-density model predicts for one input.
/// Throws ConfigError if the model is not of the mdn family.
MixtureParams mdn_mixture(const ModelInstance& model, std::span<const float> x);

}  // namespace qdbench
