#pragma once

// Test-set evaluation: ranking metrics, average CAMs, agreement between model
// and human saliency, the data-scaling crossover, and results tables.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cyborg/csv.hpp"
#include "cyborg/cyborg_loss.hpp"
#include "cyborg/datasets.hpp"
#include "cyborg/metrics.hpp"
#include "cyborg/model_adapter.hpp"
#include "cyborg/render.hpp"
#include "cyborg/training.hpp"

namespace cyborg {

/// Normalized CAM of one sample, built the way training builds it.
template <ProbeBackbone Model>
Map sample_cam(const Model& model, const Sample& s, CamClass cam_class = CamClass::true_label) {
  const auto probe = model.forward_one(s.image).first;
  return model_saliency(probe, cam_class_for(probe, class_index(s.label), cam_class));
}

/// Pixelwise mean of normalized CAMs, accumulated in split order.
template <ProbeBackbone Model>
SaliencyMap average_cam(const Model& model, const std::vector<Sample>& split,
                        CamClass cam_class = CamClass::true_label) {
  if (split.empty()) fail(ErrorKind::EmptySplit, "average CAM of an empty split");
  Map sum(model.feature_size(), 0.0);
  for (const auto& s : split) {
    const Map cam = sample_cam(model, s, cam_class);
    for (std::size_t i = 0; i < sum.count(); ++i) sum[i] += cam[i];
  }
  for (double& v : sum) v /= static_cast<double>(split.size());
  return SaliencyMap(clip01(sum), SaliencySource::synthetic);
}

inline void render_cam(const SaliencyMap& cam, const std::filesystem::path& png, std::size_t scale = 16) {
  render::heatmap(cam.values(), scale).save(png);
}

/// Mean distance between each sample's human map and its normalized CAM.
template <ProbeBackbone Model>
std::map<MeasureKind, double> cam_human_agreement(const Model& model, const std::vector<Sample>& split,
                                                  std::span<const MeasureKind> measures = kAllMeasures,
                                                  CamClass cam_class = CamClass::true_label) {
  if (split.empty()) fail(ErrorKind::EmptySplit, "agreement over an empty split");
  std::map<MeasureKind, double> out;
  for (auto m : measures) out[m] = 0.0;
  for (const auto& s : split) {
    if (!s.saliency) fail(ErrorKind::MissingSaliency, "sample " + s.id + " has no saliency map");
    const Map cam = sample_cam(model, s, cam_class);
    for (auto m : measures) out[m] += saliency_distance(s.saliency->values(), cam, DistanceMeasure{m});
  }
  for (auto& [m, v] : out) v /= static_cast<double>(split.size());
  return out;
}

struct ScalingPoint {
  double multiple = 1.0;
  double mean_auc = 0.0;
};

inline ScalingPoint scaling_point(double multiple, std::span<const double> run_aucs) {
  return {multiple, mean_std(run_aucs).mean};
}

/// Smallest multiple at which traditional AUC reaches `target`, interpolated
/// linearly between bracketing points; nullopt when never reached.
inline std::optional<double> scaling_crossover(double target, std::vector<ScalingPoint> points) {
  if (points.size() < 2) fail(ErrorKind::InsufficientPoints, "crossover needs at least two multiples");
  for (const auto& p : points)
    if (!std::isfinite(p.mean_auc) || !std::isfinite(p.multiple)) fail(ErrorKind::NonFinite, "non-finite point");
  if (!std::isfinite(target)) fail(ErrorKind::NonFinite, "non-finite target");
  std::sort(points.begin(), points.end(), [](auto a, auto b) { return a.multiple < b.multiple; });
  if (points[0].mean_auc >= target) return points[0].multiple;
  for (std::size_t i = 1; i < points.size(); ++i) {
    const auto& a = points[i - 1];
    const auto& b = points[i];
    if (b.mean_auc >= target) return a.multiple + (target - a.mean_auc) / (b.mean_auc - a.mean_auc) * (b.multiple - a.multiple);
  }
  return std::nullopt;
}

struct ResultRow {
  std::string domain;
  std::string architecture;
  std::string setting;
  MeanStd auc;
  MeanStd ap;
};

inline const csv::Row& results_header() {
  static const csv::Row h{"domain", "architecture", "setting", "mean_auc", "std_auc", "mean_ap", "std_ap"};
  return h;
}

inline csv::Row to_row(const ResultRow& r) {
  return {r.domain, r.architecture, r.setting, csv::number(r.auc.mean), csv::number(r.auc.std),
          csv::number(r.ap.mean), csv::number(r.ap.std)};
}

/// Appends one row, writing the header first when the file is new.
inline void append_result(const std::filesystem::path& path, const ResultRow& row) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  if (fresh) out << csv::format_row(results_header());
  out << csv::format_row(to_row(row));
}

inline std::vector<ResultRow> read_results(const std::filesystem::path& path) {
  const auto rows = csv::read(path);
  if (rows.empty() || rows[0] != results_header()) fail(ErrorKind::SchemaError, path.string() + ": bad header");
  std::vector<ResultRow> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 7) fail(ErrorKind::SchemaError, path.string() + ": row " + std::to_string(i));
    out.push_back({r[0], r[1], r[2], {csv::parse_double(r[3], "mean_auc"), csv::parse_double(r[4], "std_auc")},
                   {csv::parse_double(r[5], "mean_ap"), csv::parse_double(r[6], "std_ap")}});
  }
  return out;
}

/// Train/val accuracy and val AUC of one run as a PNG line plot.
inline void plot_curves(const RunResult& run, const std::filesystem::path& png) {
  render::Series train{"train_acc", {}}, val{"val_acc", {}}, auc{"val_auc", {}};
  for (const auto& e : run.curves) {
    train.values.push_back(e.train_acc);
    val.values.push_back(e.val_acc);
    auc.values.push_back(e.val_auc);
  }
  render::line_plot({train, val, auc}).save(png);
}

}  // namespace cyborg
