#pragma once

#include <cmath>
#include <string_view>
#include <utility>

#include "cyborg/grid.hpp"

namespace cyborg {

enum class SaliencySource { annotation, eyetrack, mask, synthetic, ablation };

constexpr std::string_view to_string(SaliencySource s) {
  switch (s) {
    case SaliencySource::annotation: return "annotation";
    case SaliencySource::eyetrack: return "eyetrack";
    case SaliencySource::mask: return "mask";
    case SaliencySource::synthetic: return "synthetic";
    case SaliencySource::ablation: return "ablation";
  }
  return "unknown";
}

/// Nonnegative map in [0,1], spatially registered to an image. Construction
/// validates the bounds so every map in flight satisfies them.
class SaliencyMap {
 public:
  SaliencyMap(Map values, SaliencySource source) : values_(std::move(values)), source_(source) {
    if (values_.width() < 1 || values_.height() < 1) fail(ErrorKind::InvalidMap, "saliency map must be at least 1x1");
    for (double v : values_)
      if (!(v >= 0.0 && v <= 1.0)) fail(ErrorKind::InvalidMap, "saliency value outside [0,1]");
  }

  const Map& values() const { return values_; }
  SaliencySource source() const { return source_; }
  Size size() const { return values_.size(); }
  std::size_t width() const { return values_.width(); }
  std::size_t height() const { return values_.height(); }
  double operator()(std::size_t x, std::size_t y) const { return values_(x, y); }

  friend bool operator==(const SaliencyMap&, const SaliencyMap&) = default;

 private:
  Map values_;
  SaliencySource source_;
};

inline Map clip01(Map m) {
  for (double& v : m) v = std::clamp(v, 0.0, 1.0);
  return m;
}

}  // namespace cyborg
