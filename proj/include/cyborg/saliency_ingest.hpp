#pragma once

// Human saliency construction: annotation averaging, eye-tracking heatmaps,
// crop/resize alignment, and the dataset manifest.

#include <cmath>
#include <filesystem>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cyborg/csv.hpp"
#include "cyborg/grid.hpp"
#include "cyborg/saliency_map.hpp"

namespace cyborg {

enum class Label : int { typical = 0, atypical = 1 };
enum class Split { train, val, test };

constexpr int class_index(Label l) { return static_cast<int>(l); }

constexpr std::string_view to_string(Label l) { return l == Label::typical ? "typical" : "atypical"; }

constexpr std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "unknown";
}

inline std::optional<Label> parse_label(std::string_view s) {
  if (s == "typical") return Label::typical;
  if (s == "atypical") return Label::atypical;
  return std::nullopt;
}

inline std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Annotations

/// Pixelwise mean of binary annotator masks. No renormalization: with m
/// annotators every value is k/m.
inline SaliencyMap average_annotations(std::span<const Map> masks) {
  if (masks.empty()) fail(ErrorKind::EmptyInput, "no annotation masks");
  const Size size = masks.front().size();
  Map sum(size, 0.0);
  for (const auto& mask : masks) {
    if (mask.size() != size) fail(ErrorKind::ShapeMismatch, "annotation masks differ in size");
    for (std::size_t i = 0; i < mask.count(); ++i) {
      const double v = mask[i];
      if (v != 0.0 && v != 1.0) fail(ErrorKind::NonBinary, "annotation mask entry " + std::to_string(v));
      sum[i] += v;
    }
  }
  const double m = static_cast<double>(masks.size());
  for (double& v : sum) v /= m;
  return SaliencyMap(std::move(sum), SaliencySource::annotation);
}

// ---------------------------------------------------------------------------
// Eye tracking

struct Fixation {
  double x = 0.0;  // pixels
  double y = 0.0;
  double duration_ms = 0.0;
};

struct EyetrackConfig {
  double min_duration_ms = 150.0;
  double sigma_px = 1.0;
};

/// Pixel extent of a visual angle at the given viewing distance and pixel pitch.
inline double visual_angle_to_pixels(double degrees, double viewing_distance_mm, double pixel_pitch_mm) {
  if (!(degrees > 0 && viewing_distance_mm > 0 && pixel_pitch_mm > 0))
    fail(ErrorKind::ConfigInvalid, "viewing geometry must be positive");
  const double half = degrees * std::numbers::pi / 360.0;
  return 2.0 * viewing_distance_mm * std::tan(half) / pixel_pitch_mm;
}

/// Duration-weighted sum of isotropic Gaussians (unit peak, truncated at 4 sigma),
/// before max-normalization. Fixations shorter than the minimum are discarded.
inline Map fixation_density(std::span<const Fixation> fixations, Size image_size, const EyetrackConfig& cfg) {
  if (image_size.width < 1 || image_size.height < 1) fail(ErrorKind::ConfigInvalid, "image size must be positive");
  if (!(cfg.sigma_px > 0) || !(cfg.min_duration_ms >= 0)) fail(ErrorKind::ConfigInvalid, "invalid eye-tracking config");
  Map density(image_size, 0.0);
  const double radius = 4.0 * cfg.sigma_px;
  const double inv_two_var = 1.0 / (2.0 * cfg.sigma_px * cfg.sigma_px);
  bool any = false;
  for (const auto& f : fixations) {
    if (!(f.duration_ms > 0)) fail(ErrorKind::InvalidFixation, "fixation duration must be positive");
    if (!(f.x >= 0 && f.y >= 0 && f.x < static_cast<double>(image_size.width) &&
          f.y < static_cast<double>(image_size.height)))
      fail(ErrorKind::InvalidFixation, "fixation outside image bounds");
    if (f.duration_ms < cfg.min_duration_ms) continue;
    any = true;
    const auto lo_x = static_cast<std::size_t>(std::max(0.0, std::ceil(f.x - radius)));
    const auto lo_y = static_cast<std::size_t>(std::max(0.0, std::ceil(f.y - radius)));
    const auto hi_x = static_cast<std::size_t>(std::min<double>(image_size.width - 1, std::floor(f.x + radius)));
    const auto hi_y = static_cast<std::size_t>(std::min<double>(image_size.height - 1, std::floor(f.y + radius)));
    for (std::size_t y = lo_y; y <= hi_y; ++y) {
      for (std::size_t x = lo_x; x <= hi_x; ++x) {
        const double dx = static_cast<double>(x) - f.x;
        const double dy = static_cast<double>(y) - f.y;
        const double r2 = dx * dx + dy * dy;
        if (r2 > radius * radius) continue;
        density(x, y) += f.duration_ms * std::exp(-r2 * inv_two_var);
      }
    }
  }
  if (!any) fail(ErrorKind::NoSurvivingFixations, "every fixation is shorter than the minimum duration");
  return density;
}

/// Eye-tracking saliency: density divided by its maximum, so the peak is exactly 1.
inline SaliencyMap fixations_to_heatmap(std::span<const Fixation> fixations, Size image_size,
                                        const EyetrackConfig& cfg) {
  Map density = fixation_density(fixations, image_size, cfg);
  const double peak = *std::max_element(density.begin(), density.end());
  for (double& v : density) v /= peak;
  return SaliencyMap(std::move(density), SaliencySource::eyetrack);
}

inline std::vector<Fixation> read_fixation_log(const std::filesystem::path& path) {
  const auto rows = csv::read(path);
  if (rows.empty() || rows.front() != csv::Row{"x", "y", "duration_ms"})
    fail(ErrorKind::SchemaError, path.string() + ": expected header x,y,duration_ms");
  std::vector<Fixation> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 3) fail(ErrorKind::SchemaError, path.string() + ": row " + std::to_string(i) + " needs 3 fields");
    out.push_back({csv::parse_double(rows[i][0], "x"), csv::parse_double(rows[i][1], "y"),
                   csv::parse_double(rows[i][2], "duration_ms")});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Resampling

namespace detail {

struct Tap {
  std::size_t first = 0;
  std::vector<double> weights;
};

// Triangle (bilinear) filter with support widened by the reduction factor,
// the convention of PIL's BILINEAR resize. Upsampling is plain bilinear with
// half-pixel centers. Samples beyond the border mirror back inside
// (half-sample symmetric), so constants are preserved at the edges.
inline std::size_t mirror_index(std::ptrdiff_t j, std::size_t n) {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  std::ptrdiff_t k = j % period;
  if (k < 0) k += period;
  return static_cast<std::size_t>(k < static_cast<std::ptrdiff_t>(n) ? k : period - 1 - k);
}

inline std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  const double support = std::max(scale, 1.0);
  std::vector<Tap> taps(out);
  for (std::size_t i = 0; i < out; ++i) {
    const double center = (static_cast<double>(i) + 0.5) * scale;
    const auto lo = static_cast<std::ptrdiff_t>(std::floor(center - support));
    const auto hi = static_cast<std::ptrdiff_t>(std::ceil(center + support));
    std::vector<double> dense(in, 0.0);
    double total = 0.0;
    for (std::ptrdiff_t j = lo; j <= hi; ++j) {
      const double t = (static_cast<double>(j) + 0.5 - center) / support;
      const double w = std::max(0.0, 1.0 - std::abs(t));
      if (w == 0.0) continue;
      dense[mirror_index(j, in)] += w;
      total += w;
    }
    std::size_t first = 0, last = in - 1;
    while (dense[first] == 0.0) ++first;
    while (dense[last] == 0.0) --last;
    Tap tap;
    tap.first = first;
    for (std::size_t j = first; j <= last; ++j) tap.weights.push_back(dense[j] / total);
    taps[i] = std::move(tap);
  }
  return taps;
}

}  // namespace detail

/// Separable bilinear resize of an arbitrary real map (no clipping).
inline Map resize_bilinear(const Map& src, Size target) {
  if (target.width < 1 || target.height < 1) fail(ErrorKind::ConfigInvalid, "target size must be at least 1x1");
  if (src.size() == target) return src;
  const auto tx = detail::bilinear_taps(src.width(), target.width);
  const auto ty = detail::bilinear_taps(src.height(), target.height);
  Map horizontal(target.width, src.height(), 0.0);
  for (std::size_t y = 0; y < src.height(); ++y)
    for (std::size_t x = 0; x < target.width; ++x) {
      double acc = 0.0;
      const auto& tap = tx[x];
      for (std::size_t k = 0; k < tap.weights.size(); ++k) acc += tap.weights[k] * src(tap.first + k, y);
      horizontal(x, y) = acc;
    }
  Map out(target, 0.0);
  for (std::size_t y = 0; y < target.height; ++y) {
    const auto& tap = ty[y];
    for (std::size_t x = 0; x < target.width; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < tap.weights.size(); ++k) acc += tap.weights[k] * horizontal(x, tap.first + k);
      out(x, y) = acc;
    }
  }
  return out;
}

struct CropBox {
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t width = 0;
  std::size_t height = 0;
};

inline CropBox full_frame(Size s) { return {0, 0, s.width, s.height}; }

inline Map crop(const Map& src, const CropBox& box) {
  if (box.width < 1 || box.height < 1 || box.x + box.width > src.width() || box.y + box.height > src.height())
    fail(ErrorKind::OutOfBounds, "crop box exceeds source " + to_string(src.size()));
  Map out(box.width, box.height);
  for (std::size_t y = 0; y < box.height; ++y)
    for (std::size_t x = 0; x < box.width; ++x) out(x, y) = src(box.x + x, box.y + y);
  return out;
}

/// Crop, bilinear resample, clip to [0,1].
inline SaliencyMap align_heatmap(const SaliencyMap& map, const CropBox& box, Size target) {
  return SaliencyMap(clip01(resize_bilinear(crop(map.values(), box), target)), map.source());
}

// ---------------------------------------------------------------------------
// Manifest

struct ManifestRecord {
  std::filesystem::path image;
  Label label = Label::typical;
  std::optional<std::filesystem::path> saliency;
  Split split = Split::train;
};

struct ManifestOptions {
  /// Every training row must name a saliency file.
  bool strict_saliency = false;
};

inline const csv::Row& manifest_header() {
  static const csv::Row header{"image", "label", "saliency", "split"};
  return header;
}

/// Parses and validates a manifest. Relative paths resolve against the
/// manifest's directory; returned paths are resolved.
inline std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path, ManifestOptions options = {}) {
  namespace fs = std::filesystem;
  if (!fs::is_regular_file(path)) fail(ErrorKind::MissingFile, "manifest not found: " + path.string());
  const auto rows = csv::read(path);
  if (rows.empty() || rows.front() != manifest_header())
    fail(ErrorKind::SchemaError, path.string() + ": expected header image,label,saliency,split");
  const fs::path base = path.parent_path();
  std::vector<ManifestRecord> records;
  std::set<fs::path> seen;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const std::string where = path.string() + " row " + std::to_string(i);
    if (row.size() != 4) fail(ErrorKind::SchemaError, where + ": expected 4 fields");
    ManifestRecord rec;
    if (row[0].empty()) fail(ErrorKind::SchemaError, where + ": empty image path");
    rec.image = (base / row[0]).lexically_normal();
    const auto label = parse_label(row[1]);
    if (!label) fail(ErrorKind::SchemaError, where + ": label must be typical or atypical");
    rec.label = *label;
    if (!row[2].empty()) rec.saliency = (base / row[2]).lexically_normal();
    const auto split = parse_split(row[3]);
    if (!split) fail(ErrorKind::SchemaError, where + ": split must be train, val or test");
    rec.split = *split;
    if (options.strict_saliency && rec.split == Split::train && !rec.saliency)
      fail(ErrorKind::SchemaError, where + ": training row without saliency");
    if (!seen.insert(rec.image).second) fail(ErrorKind::SchemaError, where + ": duplicate image " + row[0]);
    if (!fs::is_regular_file(rec.image)) fail(ErrorKind::DanglingPath, where + ": missing image " + rec.image.string());
    if (rec.saliency && !fs::is_regular_file(*rec.saliency))
      fail(ErrorKind::DanglingPath, where + ": missing saliency " + rec.saliency->string());
    records.push_back(std::move(rec));
  }
  return records;
}

/// Writes records with paths relative to the manifest's directory.
inline void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  namespace fs = std::filesystem;
  const fs::path base = fs::absolute(path).parent_path();
  auto rel = [&](const fs::path& p) { return fs::absolute(p).lexically_relative(base).generic_string(); };
  std::vector<csv::Row> rows;
  for (const auto& r : records)
    rows.push_back({rel(r.image), std::string(to_string(r.label)), r.saliency ? rel(*r.saliency) : std::string(),
                    std::string(to_string(r.split))});
  csv::write(path, manifest_header(), rows);
}

}  // namespace cyborg
