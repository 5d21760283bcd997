#pragma once

// In-memory datasets, the synthetic spurious-correlation generator, training
// set scaling, and loading from a manifest.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cyborg/ablations.hpp"
#include "cyborg/image_io.hpp"
#include "cyborg/saliency_ingest.hpp"

namespace cyborg {

struct Sample {
  std::string id;
  Image image;
  Label label = Label::typical;
  std::optional<SaliencyMap> saliency;
};

struct Dataset {
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;

  std::vector<Sample>& split(Split s) { return s == Split::train ? train : s == Split::val ? val : test; }
  const std::vector<Sample>& split(Split s) const {
    return s == Split::train ? train : s == Split::val ? val : test;
  }
};

inline std::size_t count_label(const std::vector<Sample>& samples, Label label) {
  return static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [&](const Sample& s) { return s.label == label; }));
}

/// Resizes every saliency map to the CAM grid, once.
inline void align_saliency(Dataset& data, Size cam_size) {
  for (auto split : {Split::train, Split::val, Split::test})
    for (auto& s : data.split(split))
      if (s.saliency && s.saliency->size() != cam_size)
        s.saliency = align_heatmap(*s.saliency, full_frame(s.saliency->size()), cam_size);
}

/// Replaces training-split saliency with an ablation substitute. Val/test maps
/// keep the human source so agreement is always measured against humans.
inline void substitute_saliency(Dataset& data, SaliencySourceKind kind, std::uint64_t base_seed,
                                double gaussian_sigma_fraction = 0.25) {
  for (auto& s : data.train) {
    if (kind == SaliencySourceKind::human) continue;
    if (!s.saliency && kind != SaliencySourceKind::noise && kind != SaliencySourceKind::gaussian)
      fail(ErrorKind::MissingSaliency, "sample " + s.id + " has no map to derive a substitute from");
    const Size shape = s.saliency ? s.saliency->size() : s.image.size();
    switch (kind) {
      case SaliencySourceKind::noise: s.saliency = noise_saliency(shape, sample_seed(base_seed, s.id)); break;
      case SaliencySourceKind::inverted: s.saliency = invert_saliency(*s.saliency); break;
      case SaliencySourceKind::gaussian: s.saliency = gaussian_kernel_saliency(shape, gaussian_sigma_fraction); break;
      case SaliencySourceKind::mask:
        s.saliency = SaliencyMap(binarize(s.saliency->values()), SaliencySource::mask);
        break;
      case SaliencySourceKind::human: break;
    }
  }
}

// ---------------------------------------------------------------------------
// Synthetic spurious-correlation data
//
// Class signal: oriented stripes inside the salient box (horizontal for
// typical, vertical for atypical). Shortcut: a bright square in a corner whose
// presence tracks the label with probability rho. Ground-truth saliency is the
// salient box smoothed with a 2 px Gaussian.

struct SpuriousConfig {
  std::size_t image_size = 32;
  std::size_t n_train_per_class = 200;
  std::size_t n_val_per_class = 30;
  std::size_t n_test_per_class = 100;
  CropBox salient{13, 13, 16, 16};
  CropBox marker{0, 0, 5, 5};
  double rho_train = 1.0;  // also used for validation
  double rho_test = 0.0;
  double signal = 0.08;   // stripe amplitude
  double noise = 0.15;    // per-pixel Gaussian noise
  double marker_intensity = 0.5;  // added to the background inside the marker
  double saliency_sigma_px = 2.0;
  std::uint64_t seed = 0;
};

inline void validate(const SpuriousConfig& cfg) {
  auto inside = [&](const CropBox& b) {
    return b.width > 0 && b.height > 0 && b.x + b.width <= cfg.image_size && b.y + b.height <= cfg.image_size;
  };
  if (cfg.image_size < 16) fail(ErrorKind::ConfigInvalid, "image_size must be at least 16");
  if (cfg.n_train_per_class == 0 || cfg.n_val_per_class == 0 || cfg.n_test_per_class == 0)
    fail(ErrorKind::ConfigInvalid, "every split needs samples");
  if (!inside(cfg.salient) || !inside(cfg.marker)) fail(ErrorKind::ConfigInvalid, "region outside the image");
  if (!(cfg.rho_train >= 0 && cfg.rho_train <= 1 && cfg.rho_test >= 0 && cfg.rho_test <= 1))
    fail(ErrorKind::ConfigInvalid, "rho must lie in [0,1]");
  if (!(cfg.saliency_sigma_px > 0) || cfg.noise < 0) fail(ErrorKind::ConfigInvalid, "bad noise or sigma");
  // The smoothed saliency must not reach the marker.
  const double reach = 4.0 * cfg.saliency_sigma_px;
  const auto gap = [](std::size_t a0, std::size_t a1, std::size_t b0, std::size_t b1) -> double {
    if (a1 <= b0) return static_cast<double>(b0 - a1) + 1.0;
    if (b1 <= a0) return static_cast<double>(a0 - b1) + 1.0;
    return 0.0;
  };
  const auto& s = cfg.salient;
  const auto& m = cfg.marker;
  const double gx = gap(s.x, s.x + s.width, m.x, m.x + m.width);
  const double gy = gap(s.y, s.y + s.height, m.y, m.y + m.height);
  if (std::max(gx, gy) <= reach) fail(ErrorKind::ConfigInvalid, "salient and marker regions must be disjoint");
}

/// Gaussian-smoothed indicator of the salient box (kernel truncated at 4 sigma).
inline SaliencyMap ground_truth_saliency(const SpuriousConfig& cfg) {
  const std::size_t n = cfg.image_size;
  const double sigma = cfg.saliency_sigma_px;
  const auto radius = static_cast<std::ptrdiff_t>(std::floor(4.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (std::ptrdiff_t k = -radius; k <= radius; ++k)
    total += kernel[static_cast<std::size_t>(k + radius)] = std::exp(-double(k * k) / (2 * sigma * sigma));
  for (double& k : kernel) k /= total;
  auto inside = [&](std::ptrdiff_t x, std::ptrdiff_t y) {
    return x >= static_cast<std::ptrdiff_t>(cfg.salient.x) &&
           x < static_cast<std::ptrdiff_t>(cfg.salient.x + cfg.salient.width) &&
           y >= static_cast<std::ptrdiff_t>(cfg.salient.y) &&
           y < static_cast<std::ptrdiff_t>(cfg.salient.y + cfg.salient.height);
  };
  Map m(n, n, 0.0);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t dy = -radius; dy <= radius; ++dy)
        for (std::ptrdiff_t dx = -radius; dx <= radius; ++dx)
          if (inside(static_cast<std::ptrdiff_t>(x) + dx, static_cast<std::ptrdiff_t>(y) + dy))
            acc += kernel[static_cast<std::size_t>(dx + radius)] * kernel[static_cast<std::size_t>(dy + radius)];
      m(x, y) = std::min(acc, 1.0);
    }
  return SaliencyMap(std::move(m), SaliencySource::synthetic);
}

/// Deterministic sample factory: sample (split, label, index) is a pure
/// function of the config, so fresh samples can be minted indefinitely.
class SpuriousGenerator {
 public:
  explicit SpuriousGenerator(SpuriousConfig cfg) : cfg_(std::move(cfg)), truth_((validate(cfg_), ground_truth_saliency(cfg_))) {}

  const SpuriousConfig& config() const { return cfg_; }
  const SaliencyMap& ground_truth() const { return truth_; }

  Sample make(Split split, Label label, std::size_t index) const {
    const std::string id = std::string(to_string(split)) + "_" + std::string(to_string(label)) + "_" +
                           std::to_string(index);
    std::mt19937_64 rng(sample_seed(cfg_.seed, id));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const double rho = split == Split::test ? cfg_.rho_test : cfg_.rho_train;
    const bool marker = uniform(rng) < rho ? label == Label::atypical : uniform(rng) < 0.5;
    const double phase = 2.0 * std::numbers::pi * uniform(rng);
    const double period = 5.0 + 2.0 * uniform(rng);

    const std::size_t n = cfg_.image_size;
    Image img(n, n, 0.5);
    const auto& s = cfg_.salient;
    for (std::size_t y = s.y; y < s.y + s.height; ++y)
      for (std::size_t x = s.x; x < s.x + s.width; ++x) {
        const double coord = label == Label::typical ? static_cast<double>(y) : static_cast<double>(x);
        img(x, y) += cfg_.signal * std::sin(2.0 * std::numbers::pi * coord / period + phase);
      }
    if (marker) {
      const auto& m = cfg_.marker;
      for (std::size_t y = m.y; y < m.y + m.height; ++y)
        for (std::size_t x = m.x; x < m.x + m.width; ++x) img(x, y) += cfg_.marker_intensity;
    }
    for (double& v : img) v = std::clamp(v + cfg_.noise * gauss(rng), 0.0, 1.0);
    return {id, std::move(img), label, truth_};
  }

 private:
  SpuriousConfig cfg_;
  SaliencyMap truth_;
};

inline std::vector<Sample> generate_split(const SpuriousGenerator& gen, Split split, std::size_t per_class) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < per_class; ++i)
    for (auto label : {Label::typical, Label::atypical}) out.push_back(gen.make(split, label, i));
  return out;
}

inline Dataset generate_spurious_dataset(const SpuriousConfig& cfg) {
  const SpuriousGenerator gen(cfg);
  return {generate_split(gen, Split::train, cfg.n_train_per_class),
          generate_split(gen, Split::val, cfg.n_val_per_class),
          generate_split(gen, Split::test, cfg.n_test_per_class)};
}

/// Writes images and ground-truth saliency as PNGs plus `manifest.csv`.
/// Saliency is listed for every split.
inline std::filesystem::path write_dataset(const Dataset& data, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "saliency");
  std::vector<ManifestRecord> records;
  for (auto split : {Split::train, Split::val, Split::test})
    for (const auto& s : data.split(split)) {
      ManifestRecord rec{dir / "images" / (s.id + ".png"), s.label, std::nullopt, split};
      io::store_gray_png(rec.image, s.image);
      if (s.saliency) {
        rec.saliency = dir / "saliency" / (s.id + ".png");
        io::store_gray_png(*rec.saliency, s.saliency->values());
      }
      records.push_back(std::move(rec));
    }
  write_manifest(dir / "manifest.csv", records);
  return dir / "manifest.csv";
}

struct LoadOptions {
  std::optional<Size> image_size;  // resize images when set
  SaliencySourceKind saliency_source = SaliencySourceKind::human;
};

/// Builds a dataset from manifest records. Saliency paths are read as gray
/// maps, or binarized when the source is `mask`.
inline Dataset load_dataset(const std::vector<ManifestRecord>& records, const LoadOptions& options = {}) {
  Dataset data;
  for (const auto& rec : records) {
    Sample s;
    s.id = rec.image.stem().string();
    s.image = io::load_gray_png(rec.image);
    if (options.image_size && s.image.size() != *options.image_size)
      s.image = clip01(resize_bilinear(s.image, *options.image_size));
    s.label = rec.label;
    if (rec.saliency) {
      if (options.saliency_source == SaliencySourceKind::mask && rec.split == Split::train)
        s.saliency = mask_to_saliency(*rec.saliency);
      else
        s.saliency = SaliencyMap(io::load_gray_png(*rec.saliency), SaliencySource::annotation);
    }
    data.split(rec.split).push_back(std::move(s));
  }
  return data;
}

// ---------------------------------------------------------------------------
// Scaling the training split

class SampleSource {
 public:
  virtual ~SampleSource() = default;
  /// Next unused sample of the class, or nullopt when exhausted.
  virtual std::optional<Sample> next(Label label) = 0;
};

/// Mints fresh training samples from the generator, after the ones already used.
class GeneratorSource : public SampleSource {
 public:
  GeneratorSource(const SpuriousGenerator& gen, std::size_t first_index) : gen_(gen), next_{first_index, first_index} {}
  std::optional<Sample> next(Label label) override {
    return gen_.make(Split::train, label, next_[class_index(label)]++);
  }

 private:
  const SpuriousGenerator& gen_;
  std::size_t next_[2];
};

/// A finite corpus of extra samples, consumed in order.
class PoolSource : public SampleSource {
 public:
  explicit PoolSource(std::vector<Sample> pool) : pool_(std::move(pool)) {}
  std::optional<Sample> next(Label label) override {
    for (auto it = pool_.begin(); it != pool_.end(); ++it)
      if (it->label == label) {
        Sample s = std::move(*it);
        pool_.erase(it);
        return s;
      }
    return std::nullopt;
  }

 private:
  std::vector<Sample> pool_;
};

/// Per-class targets for a training split scaled by `multiple`: total is
/// ceil(multiple * n), split by largest remainder so proportions hold to
/// within one sample.
inline std::vector<std::size_t> scaled_class_counts(const std::vector<std::size_t>& counts, double multiple) {
  std::size_t n = 0;
  for (auto c : counts) n += c;
  const auto total = static_cast<std::size_t>(std::ceil(multiple * static_cast<double>(n) - 1e-9));
  std::vector<std::size_t> out(counts.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    const double exact = multiple * static_cast<double>(counts[c]);
    out[c] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    assigned += out[c];
    remainders.push_back({exact - static_cast<double>(out[c]), c});
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](auto a, auto b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++out[remainders[k % remainders.size()].second];
  return out;
}

inline std::vector<Sample> scale_training_split(const std::vector<Sample>& train, double multiple,
                                                SampleSource& source) {
  if (!(multiple >= 1.0)) fail(ErrorKind::ConfigInvalid, "scaling multiple must be at least 1");
  const std::vector<std::size_t> counts{count_label(train, Label::typical), count_label(train, Label::atypical)};
  const auto targets = scaled_class_counts(counts, multiple);
  std::vector<Sample> out(train);
  for (auto label : {Label::typical, Label::atypical}) {
    const auto c = static_cast<std::size_t>(class_index(label));
    for (std::size_t k = counts[c]; k < targets[c]; ++k) {
      auto s = source.next(label);
      if (!s)
        fail(ErrorKind::SourceExhausted, "ran out of " + std::string(to_string(label)) + " samples at multiple " +
                                             std::to_string(multiple));
      out.push_back(std::move(*s));
    }
  }
  return out;
}

/// Validation and test splits are untouched.
inline Dataset scale_dataset(const Dataset& data, double multiple, SampleSource& source) {
  return {scale_training_split(data.train, multiple, source), data.val, data.test};
}

}  // namespace cyborg
