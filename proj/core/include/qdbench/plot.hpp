// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "qdbench/metrics.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace qdbench {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

/// Minimal RGB raster with lines, rectangles and 5x7 bitmap text.
class Canvas {
 public:
  Canvas(int width, int height, Rgb background = {255, 255, 255});

  int width() const { return width_; }
  int height() const { return height_; }

  void set(int x, int y, Rgb c);
  Rgb get(int x, int y) const;
  void fill_rect(int x0, int y0, int x1, int y1, Rgb c);
  void rect(int x0, int y0, int x1, int y1, Rgb c);
  void line(int x0, int y0, int x1, int y1, Rgb c);
  /// Text with its top-left corner at (x, y); scale multiplies the glyph size.
  /// Letters render uppercase; unsupported characters render as '?'.
  void text(int x, int y, std::string_view s, Rgb c, int scale = 1);
  static int text_width(std::string_view s, int scale = 1);

  /// Throws IoError on failure.
  void save_png(const std::filesystem::path& path) const;

 private:
  int width_, height_;
  std::vector<std::uint8_t> pixels_;
};

struct BoxGroup {
  std::string label;
  Summary summary;
};

/// Box-and-whisker chart: boxes span q1..q3 with a median bar, whiskers reach min and max.
void render_box_plot(const std::filesystem::path& path, std::string_view title, std::string_view y_label,
                     const std::vector<BoxGroup>& groups);

/// True if the file starts with the PNG signature and decodes with libpng.
bool is_readable_png(const std::filesystem::path& path, int* width = nullptr, int* height = nullptr);

}  // namespace qdbench
