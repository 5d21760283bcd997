#pragma once

// Stand-ins for human saliency: uniform noise, the inverted human map, a
// centered Gaussian, and binarized segmentation masks read from files.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>

#include "cyborg/image_io.hpp"
#include "cyborg/saliency_map.hpp"

namespace cyborg {

enum class SaliencySourceKind { human, noise, inverted, gaussian, mask };

constexpr std::string_view to_string(SaliencySourceKind k) {
  switch (k) {
    case SaliencySourceKind::human: return "human";
    case SaliencySourceKind::noise: return "noise";
    case SaliencySourceKind::inverted: return "inverted";
    case SaliencySourceKind::gaussian: return "gaussian";
    case SaliencySourceKind::mask: return "mask";
  }
  return "?";
}

inline std::optional<SaliencySourceKind> parse_saliency_source(std::string_view s) {
  for (auto k : {SaliencySourceKind::human, SaliencySourceKind::noise, SaliencySourceKind::inverted,
                 SaliencySourceKind::gaussian, SaliencySourceKind::mask})
    if (s == to_string(k)) return k;
  return std::nullopt;
}

/// Stable per-sample seed: FNV-1a over the id mixed with the base seed.
inline std::uint64_t sample_seed(std::uint64_t base_seed, std::string_view sample_id) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : sample_id) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t z = h ^ (base_seed + 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline SaliencyMap noise_saliency(Size shape, std::uint64_t seed) {
  if (shape.width < 1 || shape.height < 1) fail(ErrorKind::ConfigInvalid, "noise map must be at least 1x1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Map m(shape);
  for (double& v : m) v = u(rng);
  return SaliencyMap(std::move(m), SaliencySource::ablation);
}

/// Exact complement, no renormalization.
inline SaliencyMap invert_saliency(const SaliencyMap& map) {
  Map m = map.values();
  for (double& v : m) v = 1.0 - v;
  return SaliencyMap(std::move(m), SaliencySource::ablation);
}

/// Isotropic Gaussian at the map center, sigma = fraction * min(h, w), peak 1.
inline SaliencyMap gaussian_kernel_saliency(Size shape, double sigma_fraction = 0.25) {
  if (!(sigma_fraction > 0)) fail(ErrorKind::ConfigInvalid, "sigma_fraction must be positive");
  if (shape.width < 1 || shape.height < 1) fail(ErrorKind::ConfigInvalid, "kernel map must be at least 1x1");
  const double sigma = sigma_fraction * static_cast<double>(std::min(shape.width, shape.height));
  const double cx = (static_cast<double>(shape.width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(shape.height) - 1.0) / 2.0;
  Map m(shape);
  for (std::size_t y = 0; y < shape.height; ++y)
    for (std::size_t x = 0; x < shape.width; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      m(x, y) = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
    }
  const double peak = *std::max_element(m.begin(), m.end());
  for (double& v : m) v /= peak;
  return SaliencyMap(std::move(m), SaliencySource::ablation);
}

inline Map binarize(const Map& m, double threshold = 0.5) {
  Map out(m.size());
  for (std::size_t i = 0; i < m.count(); ++i) out[i] = m[i] >= threshold ? 1.0 : 0.0;
  return out;
}

/// Segmentation-mask pathway: single-channel PNG binarized at 0.5.
inline SaliencyMap mask_to_saliency(const std::filesystem::path& mask_file) {
  io::RawImage raw;
  try {
    raw = io::read_png(mask_file);
  } catch (const Error& e) {
    fail(ErrorKind::UnreadableMask, mask_file.string() + ": " + e.what());
  }
  if (raw.channels != 1) fail(ErrorKind::UnreadableMask, mask_file.string() + ": mask must be single-channel");
  return SaliencyMap(binarize(io::to_gray_map(raw)), SaliencySource::mask);
}

}  // namespace cyborg
