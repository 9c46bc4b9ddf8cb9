// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "qdbench/tensor.hpp"

#include "qdbench/error.hpp"

namespace qdbench {

std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

void require_shape(const Shape& actual, const Shape& expected, const char* where) {
  if (actual != expected) {
    throw ShapeError(std::string(where) + ": expected shape " + shape_string(expected) + ", got " +
                     shape_string(actual));
  }
}

void check_reshape(const Shape& from, const Shape& to) {
  if (element_count(from) != element_count(to)) {
    throw ShapeError("reshape " + shape_string(from) + " -> " + shape_string(to) +
                     " changes the element count");
  }
}

}  // namespace qdbench
