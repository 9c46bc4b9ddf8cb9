// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "qdbench/nn/layers.hpp"

#include <cmath>
#include <vector>

namespace qdbench {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// AdamW with decoupled weight decay applied to every parameter:
///   p <- p - lr * wd * p;  p <- p - lr * m_hat / (sqrt(v_hat) + eps)
template <typename T>
class AdamW {
 public:
  AdamW(nn::ParameterRefs<T> params, AdamWOptions options) : params_(std::move(params)), opt_(options) {
    for (const auto* p : params_) {
      m_.emplace_back(p->value.size(), T(0));
      v_.emplace_back(p->value.size(), T(0));
    }
  }

  void step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, t_);
    const double c2 = 1.0 - std::pow(opt_.beta2, t_);
    const T b1 = static_cast<T>(opt_.beta1), b2 = static_cast<T>(opt_.beta2);
    const T decay = static_cast<T>(1.0 - lr * opt_.weight_decay);
    const T step_size = static_cast<T>(lr / c1);
    const T inv_c2 = static_cast<T>(1.0 / std::sqrt(c2));
    const T eps = static_cast<T>(opt_.eps);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      T* w = params_[k]->value.data();
      const T* g = params_[k]->grad.data();
      T* m = m_[k].data();
      T* v = v_[k].data();
      const std::size_t n = m_[k].size();
      for (std::size_t i = 0; i < n; ++i) {
        m[i] = b1 * m[i] + (T(1) - b1) * g[i];
        v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
        w[i] = w[i] * decay - step_size * m[i] / (std::sqrt(v[i]) * inv_c2 + eps);
      }
    }
  }

  long steps() const { return t_; }

 private:
  nn::ParameterRefs<T> params_;
  AdamWOptions opt_;
  std::vector<std::vector<T>> m_, v_;
  long t_ = 0;
};

}  // namespace qdbench
