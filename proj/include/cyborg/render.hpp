#pragma once

// Minimal raster output: heatmaps through a fixed colormap and line plots of
// training curves, both written as RGB PNG.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cyborg/image_io.hpp"

namespace cyborg::render {

using Rgb = std::array<std::uint8_t, 3>;

/// Piecewise-linear "jet": blue, cyan, yellow, red.
inline Rgb colormap(double v) {
  v = std::clamp(v, 0.0, 1.0);
  static constexpr std::array<std::array<double, 3>, 4> stops{{{0, 0, 0.5}, {0, 0.8, 1}, {1, 0.9, 0}, {0.6, 0, 0}}};
  const double t = v * 3.0;
  const auto i = std::min<std::size_t>(2, static_cast<std::size_t>(t));
  const double f = t - static_cast<double>(i);
  Rgb out;
  for (std::size_t c = 0; c < 3; ++c) out[c] = io::quantize(stops[i][c] + f * (stops[i + 1][c] - stops[i][c]));
  return out;
}

class Canvas {
 public:
  Canvas(std::size_t width, std::size_t height, Rgb fill = {255, 255, 255})
      : width_(width), height_(height), pixels_(width * height * 3) {
    for (std::size_t i = 0; i < width * height; ++i) std::copy(fill.begin(), fill.end(), pixels_.begin() + i * 3);
  }

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }

  void set(std::ptrdiff_t x, std::ptrdiff_t y, Rgb c) {
    if (x < 0 || y < 0 || x >= static_cast<std::ptrdiff_t>(width_) || y >= static_cast<std::ptrdiff_t>(height_)) return;
    std::copy(c.begin(), c.end(), pixels_.begin() + (static_cast<std::size_t>(y) * width_ + static_cast<std::size_t>(x)) * 3);
  }
  Rgb get(std::size_t x, std::size_t y) const {
    const auto* p = &pixels_[(y * width_ + x) * 3];
    return {p[0], p[1], p[2]};
  }

  void line(std::ptrdiff_t x0, std::ptrdiff_t y0, std::ptrdiff_t x1, std::ptrdiff_t y1, Rgb c) {
    const std::ptrdiff_t dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const std::ptrdiff_t sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    std::ptrdiff_t err = dx + dy;
    for (;;) {
      set(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const std::ptrdiff_t e2 = 2 * err;
      if (e2 >= dy) err += dy, x0 += sx;
      if (e2 <= dx) err += dx, y0 += sy;
    }
  }

  io::RawImage image() const { return {width_, height_, 3, pixels_}; }
  void save(const std::filesystem::path& path) const { io::write_png(path, image()); }

 private:
  std::size_t width_, height_;
  std::vector<std::uint8_t> pixels_;
};

/// Heatmap with each cell drawn as a `scale` x `scale` block.
inline Canvas heatmap(const Map& m, std::size_t scale = 16) {
  Canvas c(m.width() * scale, m.height() * scale);
  for (std::size_t y = 0; y < c.height(); ++y)
    for (std::size_t x = 0; x < c.width(); ++x)
      c.set(static_cast<std::ptrdiff_t>(x), static_cast<std::ptrdiff_t>(y), colormap(m(x / scale, y / scale)));
  return c;
}

struct Series {
  std::string name;
  std::vector<double> values;  // one per x step, plotted on [0,1]
};

inline constexpr std::array<Rgb, 6> kPalette{{{31, 119, 180}, {214, 39, 40}, {44, 160, 44},
                                              {255, 127, 14}, {148, 103, 189}, {23, 190, 207}}};

/// Line plot with a fixed y range of [0,1]; series share the x axis.
inline Canvas line_plot(const std::vector<Series>& series, std::size_t width = 480, std::size_t height = 320) {
  Canvas c(width, height);
  const std::ptrdiff_t left = 30, right = static_cast<std::ptrdiff_t>(width) - 10;
  const std::ptrdiff_t top = 10, bottom = static_cast<std::ptrdiff_t>(height) - 30;
  const Rgb axis{0, 0, 0}, grid{220, 220, 220};
  for (int k = 1; k < 4; ++k) {
    const auto y = bottom - (bottom - top) * k / 4;
    c.line(left, y, right, y, grid);
  }
  c.line(left, top, left, bottom, axis);
  c.line(left, bottom, right, bottom, axis);
  std::size_t steps = 0;
  for (const auto& s : series) steps = std::max(steps, s.values.size());
  auto px = [&](std::size_t i) {
    return steps <= 1 ? left : left + static_cast<std::ptrdiff_t>(std::lround(
                                           double(right - left) * double(i) / double(steps - 1)));
  };
  auto py = [&](double v) {
    if (!std::isfinite(v)) v = 0.0;
    return bottom - static_cast<std::ptrdiff_t>(std::lround(double(bottom - top) * std::clamp(v, 0.0, 1.0)));
  };
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& v = series[k].values;
    const Rgb color = kPalette[k % kPalette.size()];
    for (std::size_t i = 0; i + 1 < v.size(); ++i) c.line(px(i), py(v[i]), px(i + 1), py(v[i + 1]), color);
    if (v.size() == 1) c.set(px(0), py(v[0]), color);
    // Legend swatch along the bottom margin.
    const auto lx = left + static_cast<std::ptrdiff_t>(k) * 40;
    for (std::ptrdiff_t d = 0; d < 24; ++d) c.line(lx + d, bottom + 12, lx + d, bottom + 18, color);
  }
  return c;
}

}  // namespace cyborg::render
