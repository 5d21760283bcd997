#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cyborg/error.hpp"

namespace cyborg {

struct Size {
  std::size_t width = 0;
  std::size_t height = 0;

  friend bool operator==(const Size&, const Size&) = default;
  std::size_t area() const { return width * height; }
};

inline std::string to_string(Size s) { return std::to_string(s.width) + "x" + std::to_string(s.height); }

/// Row-major 2-D grid. Used for images, saliency maps, CAMs and masks.
template <class T>
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t width, std::size_t height, T fill = T{})
      : width_(width), height_(height), data_(width * height, fill) {}
  explicit Grid(Size size, T fill = T{}) : Grid(size.width, size.height, fill) {}
  Grid(std::size_t width, std::size_t height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (data_.size() != width_ * height_) fail(ErrorKind::ShapeMismatch, "grid data does not match dimensions");
  }

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  Size size() const { return {width_, height_}; }
  std::size_t count() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t x, std::size_t y) { return data_[y * width_ + x]; }
  const T& operator()(std::size_t x, std::size_t y) const { return data_[y * width_ + x]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<T> data_;
};

using Map = Grid<double>;
using Image = Grid<double>;
using Mask = Grid<unsigned char>;

inline double mean(const Map& m) {
  return m.empty() ? 0.0 : std::accumulate(m.begin(), m.end(), 0.0) / static_cast<double>(m.count());
}

inline void require_same_shape(const Map& a, const Map& b, const char* what) {
  if (a.size() != b.size())
    fail(ErrorKind::ShapeMismatch, std::string(what) + ": " + to_string(a.size()) + " vs " + to_string(b.size()));
}

}  // namespace cyborg
