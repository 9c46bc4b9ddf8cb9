// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

namespace qdbench::detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename U>
U byteswap_if_big(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    U out = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      out = static_cast<U>((out << 8) | ((v >> (8 * i)) & 0xFF));
    }
    return out;
  } else {
    return v;
  }
}

template <typename F, typename U>
void append_le(std::string& out, std::span<const F> values) {
  static_assert(sizeof(F) == sizeof(U));
  const std::size_t start = out.size();
  out.resize(start + values.size() * sizeof(F));
  char* dst = out.data() + start;
  for (F v : values) {
    U bits = byteswap_if_big(std::bit_cast<U>(v));
    std::memcpy(dst, &bits, sizeof bits);
    dst += sizeof bits;
  }
}

inline void append_f64(std::string& out, std::span<const double> v) {
  append_le<double, std::uint64_t>(out, v);
}
inline void append_f32(std::string& out, std::span<const float> v) {
  append_le<float, std::uint32_t>(out, v);
}

template <typename F, typename U>
void read_le(const char* src, std::span<F> out) {
  for (F& v : out) {
    U bits;
    std::memcpy(&bits, src, sizeof bits);
    v = std::bit_cast<F>(byteswap_if_big(bits));
    src += sizeof bits;
  }
}

inline void read_f64(const char* src, std::span<double> out) {
  read_le<double, std::uint64_t>(src, out);
}
inline void read_f32(const char* src, std::span<float> out) {
  read_le<float, std::uint32_t>(src, out);
}

}  // namespace qdbench::detail
