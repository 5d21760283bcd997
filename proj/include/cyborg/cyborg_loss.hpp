#pragma once

// Saliency-guided composite loss. The model saliency of a sample is the class
// activation map (feature maps weighted by one class's final-layer weights),
// min-max normalized to [0,1] and compared against the human map with one of
// five distance measures. Per sample:
//
//   (1 - alpha) * distance(human, model) + alpha * cross_entropy
//
// averaged over the batch. Every function here has a matching backward pass.

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cyborg/grid.hpp"
#include "cyborg/model_adapter.hpp"
#include "cyborg/saliency_map.hpp"

namespace cyborg {

// ---------------------------------------------------------------------------
// Class activation maps

inline Map compute_cam(const ModelProbe& probe, std::size_t class_index) {
  if (class_index >= probe.classes())
    fail(ErrorKind::IndexOutOfRange, "class " + std::to_string(class_index) + " of " + std::to_string(probe.classes()));
  const auto weights = probe.weights_for(class_index);
  Map cam(probe.features.size, 0.0);
  for (std::size_t n = 0; n < probe.maps(); ++n) {
    const auto f = probe.features.map(n);
    const double w = weights[n];
    for (std::size_t k = 0; k < cam.count(); ++k) cam[k] += w * f[k];
  }
  return cam;
}

/// Adds the contribution of d(loss)/d(cam) to the probe gradient.
inline void compute_cam_backward(const ModelProbe& probe, std::size_t class_index, const Map& d_cam,
                                 ProbeGradient& grad) {
  const std::size_t area = probe.features.size.area();
  const std::size_t maps = probe.maps();
  const auto weights = probe.weights_for(class_index);
  for (std::size_t n = 0; n < maps; ++n) {
    const auto f = probe.features.map(n);
    double dw = 0.0;
    for (std::size_t k = 0; k < area; ++k) {
      dw += f[k] * d_cam[k];
      grad.d_features[n * area + k] += weights[n] * d_cam[k];
    }
    grad.d_class_weights[class_index * maps + n] += dw;
  }
}

// ---------------------------------------------------------------------------
// Min-max normalization

inline constexpr double kNormalizeEpsilon = 1e-8;

inline void require_finite(const Map& m) {
  for (double v : m)
    if (!std::isfinite(v)) fail(ErrorKind::NonFinite, "map has a non-finite entry");
}

/// (x - min) / (max - min); an epsilon-constant map becomes all zeros.
inline Map normalize01(const Map& raw) {
  require_finite(raw);
  if (raw.empty()) return raw;
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  const double min = *lo, range = *hi - *lo;
  Map out(raw.size(), 0.0);
  if (!(range > kNormalizeEpsilon)) return out;
  for (std::size_t k = 0; k < raw.count(); ++k) out[k] = (raw[k] - min) / range;
  return out;
}

/// Subgradient of normalize01 with respect to its input, taking the first
/// occurrence of the minimum and maximum.
inline Map normalize01_backward(const Map& raw, const Map& d_out) {
  Map d_in(raw.size(), 0.0);
  if (raw.empty()) return d_in;
  const auto lo = std::min_element(raw.begin(), raw.end());
  const auto hi = std::max_element(raw.begin(), raw.end());
  const double range = *hi - *lo;
  if (!(range > kNormalizeEpsilon)) return d_in;
  double sum_g = 0.0, sum_gy = 0.0;
  for (std::size_t k = 0; k < raw.count(); ++k) {
    const double y = (raw[k] - *lo) / range;
    sum_g += d_out[k];
    sum_gy += d_out[k] * y;
    d_in[k] = d_out[k] / range;
  }
  d_in[static_cast<std::size_t>(lo - raw.begin())] += (sum_gy - sum_g) / range;
  d_in[static_cast<std::size_t>(hi - raw.begin())] -= sum_gy / range;
  return d_in;
}

// ---------------------------------------------------------------------------
// Distance measures

/// Order doubles as the ranking tie-break order.
enum class MeasureKind { L1, MSE, SSIM, SSIM_L1, SSIM_MSE };

inline constexpr std::array<MeasureKind, 5> kAllMeasures{MeasureKind::L1, MeasureKind::MSE, MeasureKind::SSIM,
                                                         MeasureKind::SSIM_L1, MeasureKind::SSIM_MSE};

constexpr std::string_view to_string(MeasureKind k) {
  switch (k) {
    case MeasureKind::L1: return "L1";
    case MeasureKind::MSE: return "MSE";
    case MeasureKind::SSIM: return "SSIM";
    case MeasureKind::SSIM_L1: return "SSIM+L1";
    case MeasureKind::SSIM_MSE: return "SSIM+MSE";
  }
  return "?";
}

inline std::optional<MeasureKind> parse_measure(std::string_view s) {
  for (auto k : kAllMeasures)
    if (s == to_string(k)) return k;
  if (s == "SSIM_L1") return MeasureKind::SSIM_L1;
  if (s == "SSIM_MSE") return MeasureKind::SSIM_MSE;
  return std::nullopt;
}

struct DistanceMeasure {
  MeasureKind kind = MeasureKind::SSIM;
  double ssim_c1 = 0.01 * 0.01;
  double ssim_c2 = 0.03 * 0.03;

  friend bool operator==(const DistanceMeasure&, const DistanceMeasure&) = default;
};

struct DistanceResult {
  double value = 0.0;
  Map d_a;  // gradient with respect to the first argument
};

namespace detail {

struct Moments {
  double mean_a, mean_b, var_a, var_b, cov;
};

inline Moments moments(const Map& a, const Map& b) {
  const double n = static_cast<double>(a.count());
  double sa = 0.0, sb = 0.0;
  for (std::size_t k = 0; k < a.count(); ++k) {
    sa += a[k];
    sb += b[k];
  }
  Moments m{sa / n, sb / n, 0.0, 0.0, 0.0};
  for (std::size_t k = 0; k < a.count(); ++k) {
    const double da = a[k] - m.mean_a, db = b[k] - m.mean_b;
    m.var_a += da * da;
    m.var_b += db * db;
    m.cov += da * db;
  }
  m.var_a /= n;
  m.var_b /= n;
  m.cov /= n;
  return m;
}

inline double l1(const Map& a, const Map& b, Map* d_a) {
  const double n = static_cast<double>(a.count());
  double sum = 0.0;
  for (std::size_t k = 0; k < a.count(); ++k) {
    const double d = a[k] - b[k];
    sum += std::abs(d);
    if (d_a) (*d_a)[k] += (d > 0 ? 1.0 : d < 0 ? -1.0 : 0.0) / n;
  }
  return sum / n;
}

inline double mse(const Map& a, const Map& b, Map* d_a) {
  const double n = static_cast<double>(a.count());
  double sum = 0.0;
  for (std::size_t k = 0; k < a.count(); ++k) {
    const double d = a[k] - b[k];
    sum += d * d;
    if (d_a) (*d_a)[k] += 2.0 * d / n;
  }
  return sum / n;
}

// Global (single-window) SSIM; returns 1 - SSIM.
inline double ssim_distance(const Map& a, const Map& b, double c1, double c2, Map* d_a) {
  const auto m = moments(a, b);
  const double lum_num = 2.0 * m.mean_a * m.mean_b + c1;
  const double lum_den = m.mean_a * m.mean_a + m.mean_b * m.mean_b + c1;
  const double cs_num = 2.0 * m.cov + c2;
  const double cs_den = m.var_a + m.var_b + c2;
  const double ssim = (lum_num * cs_num) / (lum_den * cs_den);
  if (d_a) {
    const double n = static_cast<double>(a.count());
    for (std::size_t k = 0; k < a.count(); ++k) {
      const double d_lum_num = 2.0 * m.mean_b / n;
      const double d_lum_den = 2.0 * m.mean_a / n;
      const double d_cs_num = 2.0 * (b[k] - m.mean_b) / n;
      const double d_cs_den = 2.0 * (a[k] - m.mean_a) / n;
      const double d_ssim = (d_lum_num * cs_num + lum_num * d_cs_num) / (lum_den * cs_den) -
                            ssim * (d_lum_den / lum_den + d_cs_den / cs_den);
      (*d_a)[k] -= d_ssim;
    }
  }
  return 1.0 - ssim;
}

inline double evaluate(const Map& a, const Map& b, const DistanceMeasure& m, Map* d_a) {
  require_same_shape(a, b, "saliency_distance");
  if (!(m.ssim_c1 > 0 && m.ssim_c2 > 0)) fail(ErrorKind::ConfigInvalid, "SSIM constants must be positive");
  switch (m.kind) {
    case MeasureKind::L1: return l1(a, b, d_a);
    case MeasureKind::MSE: return mse(a, b, d_a);
    case MeasureKind::SSIM: return ssim_distance(a, b, m.ssim_c1, m.ssim_c2, d_a);
    case MeasureKind::SSIM_L1: return ssim_distance(a, b, m.ssim_c1, m.ssim_c2, d_a) + l1(a, b, d_a);
    case MeasureKind::SSIM_MSE: return ssim_distance(a, b, m.ssim_c1, m.ssim_c2, d_a) + mse(a, b, d_a);
  }
  return 0.0;
}

}  // namespace detail

inline double saliency_distance(const Map& a, const Map& b, const DistanceMeasure& m) {
  return detail::evaluate(a, b, m, nullptr);
}

inline DistanceResult saliency_distance_grad(const Map& a, const Map& b, const DistanceMeasure& m) {
  DistanceResult r{0.0, Map(a.size(), 0.0)};
  r.value = detail::evaluate(a, b, m, &r.d_a);
  return r;
}

// ---------------------------------------------------------------------------
// Composite loss

struct CyborgTerm {
  double alpha = 0.75;
  DistanceMeasure measure;

  friend bool operator==(const CyborgTerm&, const CyborgTerm&) = default;
};

/// Which class's weights build the CAM during training.
enum class CamClass { true_label, predicted };

struct BatchLoss {
  double value = 0.0;
  double classification = 0.0;  // mean cross-entropy
  double saliency = 0.0;        // mean distance (0 when alpha = 1)
  std::vector<ProbeGradient> gradients;
};

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline std::vector<double> softmax(std::span<const double> logits) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) sum += (p[c] = std::exp(logits[c] - peak));
  for (double& v : p) v /= sum;
  return p;
}

inline double cross_entropy(std::span<const double> logits, std::size_t label) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - peak);
  return peak + std::log(sum) - logits[label];
}

inline std::size_t cam_class_for(const ModelProbe& probe, int label, CamClass mode) {
  return mode == CamClass::true_label ? static_cast<std::size_t>(label) : argmax(probe.logits);
}

/// Normalized model saliency used by the loss and by evaluation.
inline Map model_saliency(const ModelProbe& probe, std::size_t class_index) {
  return normalize01(compute_cam(probe, class_index));
}

namespace detail {

inline BatchLoss batch_loss(std::span<const ModelProbe> probes, std::span<const SaliencyMap* const> human_maps,
                            std::span<const int> labels, const CyborgTerm& term, CamClass cam_class,
                            bool with_gradient) {
  if (probes.empty()) fail(ErrorKind::EmptyInput, "empty batch");
  if (labels.size() != probes.size()) fail(ErrorKind::ShapeMismatch, "one label per probe is required");
  if (!(term.alpha >= 0.0 && term.alpha <= 1.0)) fail(ErrorKind::ConfigInvalid, "alpha must lie in [0,1]");
  const bool use_saliency = term.alpha < 1.0;
  if (use_saliency && human_maps.size() != probes.size())
    fail(ErrorKind::MissingSaliency, "one human map per probe is required when alpha < 1");
  const double inv_k = 1.0 / static_cast<double>(probes.size());

  BatchLoss out;
  double total = 0.0;
  for (std::size_t k = 0; k < probes.size(); ++k) {
    const auto& probe = probes[k];
    const int label = labels[k];
    if (label < 0 || static_cast<std::size_t>(label) >= probe.classes())
      fail(ErrorKind::IndexOutOfRange, "label " + std::to_string(label));
    ProbeGradient grad;
    if (with_gradient) grad = ProbeGradient::zeros_like(probe);

    const double ce = cross_entropy(probe.logits, static_cast<std::size_t>(label));
    double sample = term.alpha * ce;
    out.classification += ce;
    if (with_gradient) {
      const auto p = softmax(probe.logits);
      for (std::size_t c = 0; c < p.size(); ++c)
        grad.d_logits[c] = term.alpha * (p[c] - (static_cast<int>(c) == label ? 1.0 : 0.0)) * inv_k;
    }

    if (use_saliency) {
      const SaliencyMap* human = human_maps[k];
      if (!human) fail(ErrorKind::MissingSaliency, "sample " + std::to_string(k) + " has no human saliency map");
      const std::size_t cls = cam_class_for(probe, label, cam_class);
      const Map cam = compute_cam(probe, cls);
      if (cam.size() != human->size())
        fail(ErrorKind::ShapeMismatch,
             "human map " + to_string(human->size()) + " vs CAM " + to_string(cam.size()));
      const Map model = normalize01(cam);
      const double weight = 1.0 - term.alpha;
      if (with_gradient) {
        auto dist = saliency_distance_grad(model, human->values(), term.measure);
        sample += weight * dist.value;
        out.saliency += dist.value;
        for (double& g : dist.d_a) g *= weight * inv_k;
        compute_cam_backward(probe, cls, normalize01_backward(cam, dist.d_a), grad);
      } else {
        const double dist = saliency_distance(model, human->values(), term.measure);
        sample += weight * dist;
        out.saliency += dist;
      }
    }
    total += sample;
    if (with_gradient) out.gradients.push_back(std::move(grad));
  }
  out.value = total * inv_k;
  out.classification *= inv_k;
  out.saliency *= inv_k;
  return out;
}

}  // namespace detail

/// Mean composite loss over the batch. At alpha = 1 the human maps are not
/// consulted and the value is the batch cross-entropy.
inline double cyborg_batch_loss(std::span<const ModelProbe> probes, std::span<const SaliencyMap* const> human_maps,
                                std::span<const int> labels, const CyborgTerm& term,
                                CamClass cam_class = CamClass::true_label) {
  return detail::batch_loss(probes, human_maps, labels, term, cam_class, false).value;
}

inline BatchLoss cyborg_batch_loss_grad(std::span<const ModelProbe> probes,
                                        std::span<const SaliencyMap* const> human_maps, std::span<const int> labels,
                                        const CyborgTerm& term, CamClass cam_class = CamClass::true_label) {
  return detail::batch_loss(probes, human_maps, labels, term, cam_class, true);
}

}  // namespace cyborg
