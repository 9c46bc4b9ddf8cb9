// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/StdVector>

#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace qdbench {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

template <typename T>
using MatrixRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<MatrixRM<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const MatrixRM<T>>;

/// Dense row-major array aligned to Eigen's widest packet. Image batches are laid out NHWC, token batches
/// N x tokens x features, so the trailing axis is always contiguous.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Same storage, new shape. The element count must not change.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  /// View as (rows x size/rows) with rows = product of all but the last axis.
  MatrixMap<T> as_matrix() { return {data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())}; }
  ConstMatrixMap<T> as_matrix() const {
    return {data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())};
  }

  std::size_t cols() const noexcept { return shape_.empty() ? 1 : shape_.back(); }
  std::size_t rows() const noexcept { return cols() == 0 ? 0 : size() / cols(); }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

 private:
  Shape shape_;
  std::vector<T, Eigen::aligned_allocator<T>> data_;
};

/// Throws ShapeError unless the shapes are identical.
void require_shape(const Shape& actual, const Shape& expected, const char* where);

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

void check_reshape(const Shape& from, const Shape& to);

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) && {
  check_reshape(shape_, shape);
  Tensor out;
  out.shape_ = std::move(shape);
  out.data_ = std::move(data_);
  return out;
}

}  // namespace qdbench
