#pragma once

// Backbone contract for saliency-guided training: one forward pass yields the
// logits together with the last-conv feature maps and the final-layer class
// weights, and gradients flow back into all three.

#include <bit>
#include <concepts>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cyborg/grid.hpp"

namespace cyborg {

/// N feature maps of h x w, stored [n][y][x].
struct FeatureStack {
  std::size_t count = 0;
  Size size;
  std::vector<double> data;

  std::span<const double> map(std::size_t n) const { return {data.data() + n * size.area(), size.area()}; }
  std::span<double> map(std::size_t n) { return {data.data() + n * size.area(), size.area()}; }
};

struct ModelProbe {
  std::vector<double> logits;         // C
  FeatureStack features;              // N maps
  std::vector<double> class_weights;  // C x N, row per class

  std::size_t classes() const { return logits.size(); }
  std::size_t maps() const { return features.count; }
  std::span<const double> weights_for(std::size_t c) const {
    return {class_weights.data() + c * features.count, features.count};
  }
};

/// Loss gradient with respect to each part of a probe (same layouts).
struct ProbeGradient {
  std::vector<double> d_logits;
  std::vector<double> d_features;
  std::vector<double> d_class_weights;

  static ProbeGradient zeros_like(const ModelProbe& p) {
    return {std::vector<double>(p.logits.size(), 0.0), std::vector<double>(p.features.data.size(), 0.0),
            std::vector<double>(p.class_weights.size(), 0.0)};
  }
};

struct BackboneSpec {
  std::string architecture = "toy_cnn";
  std::size_t input_size = 64;
  std::size_t input_channels = 1;
  std::size_t classes = 2;
  /// "seed:<n>" for random init, otherwise a pretrained-weights reference.
  std::string initialization = "seed:0";
  std::vector<std::size_t> stage_widths{8, 8, 8};

  friend bool operator==(const BackboneSpec&, const BackboneSpec&) = default;
};

inline void to_json(nlohmann::json& j, const BackboneSpec& s) {
  j = {{"architecture", s.architecture}, {"input_size", s.input_size}, {"input_channels", s.input_channels},
       {"classes", s.classes}, {"initialization", s.initialization}, {"stage_widths", s.stage_widths}};
}

inline void from_json(const nlohmann::json& j, BackboneSpec& s) {
  j.at("architecture").get_to(s.architecture);
  j.at("input_size").get_to(s.input_size);
  j.at("input_channels").get_to(s.input_channels);
  j.at("classes").get_to(s.classes);
  j.at("initialization").get_to(s.initialization);
  j.at("stage_widths").get_to(s.stage_widths);
}

template <class M>
concept ProbeBackbone = requires(const M& cm, M& m, const Image& image, const typename M::Cache& cache,
                                 const ProbeGradient& grad, std::span<double> param_grad) {
  { cm.spec() } -> std::convertible_to<const BackboneSpec&>;
  { cm.feature_size() } -> std::convertible_to<Size>;
  { cm.forward_one(image) } -> std::same_as<std::pair<ModelProbe, typename M::Cache>>;
  cm.backward_one(cache, grad, param_grad);
  { cm.parameters() } -> std::convertible_to<std::span<const double>>;
  { m.parameters() } -> std::convertible_to<std::span<double>>;
};

// ---------------------------------------------------------------------------
// Toy CNN: three conv3x3+ReLU stages with 2x2 average pooling, global average
// pooling, linear classifier. CAM-compatible by construction. Inputs in [0,1]
// are shifted to [-0.5,0.5] before the first convolution.

namespace detail {

inline void conv3x3_forward(const double* in, std::size_t cin, std::size_t h, std::size_t w, const double* weights,
                            const double* bias, std::size_t cout, double* out) {
  const std::size_t hw = h * w;
  for (std::size_t o = 0; o < cout; ++o) {
    double* plane = out + o * hw;
    std::fill(plane, plane + hw, bias[o]);
    for (std::size_t i = 0; i < cin; ++i) {
      const double* src = in + i * hw;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const double wv = weights[((o * cin + i) * 3 + ky) * 3 + kx];
          const int dy = ky - 1;
          const int dx = kx - 1;
          const std::size_t y0 = dy < 0 ? 1 : 0;
          const std::size_t y1 = dy > 0 ? h - 1 : h;
          const std::size_t x0 = dx < 0 ? 1 : 0;
          const std::size_t x1 = dx > 0 ? w - 1 : w;
          for (std::size_t y = y0; y < y1; ++y) {
            const double* row_in = src + (y + dy) * w + dx;
            double* row_out = plane + y * w;
            for (std::size_t x = x0; x < x1; ++x) row_out[x] += wv * row_in[x];
          }
        }
      }
    }
  }
}

// d_in may be null when the input gradient is not needed.
inline void conv3x3_backward(const double* in, std::size_t cin, std::size_t h, std::size_t w, const double* weights,
                             std::size_t cout, const double* d_out, double* d_weights, double* d_bias, double* d_in) {
  const std::size_t hw = h * w;
  for (std::size_t o = 0; o < cout; ++o) {
    const double* g = d_out + o * hw;
    double sum = 0.0;
    for (std::size_t k = 0; k < hw; ++k) sum += g[k];
    d_bias[o] += sum;
    for (std::size_t i = 0; i < cin; ++i) {
      const double* src = in + i * hw;
      double* d_src = d_in ? d_in + i * hw : nullptr;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const std::size_t widx = ((o * cin + i) * 3 + ky) * 3 + kx;
          const double wv = weights[widx];
          const int dy = ky - 1;
          const int dx = kx - 1;
          const std::size_t y0 = dy < 0 ? 1 : 0;
          const std::size_t y1 = dy > 0 ? h - 1 : h;
          const std::size_t x0 = dx < 0 ? 1 : 0;
          const std::size_t x1 = dx > 0 ? w - 1 : w;
          double acc = 0.0;
          for (std::size_t y = y0; y < y1; ++y) {
            const double* row_in = src + (y + dy) * w + dx;
            const double* row_g = g + y * w;
            for (std::size_t x = x0; x < x1; ++x) acc += row_g[x] * row_in[x];
            if (d_src) {
              double* row_d = d_src + (y + dy) * w + dx;
              for (std::size_t x = x0; x < x1; ++x) row_d[x] += wv * row_g[x];
            }
          }
          d_weights[widx] += acc;
        }
      }
    }
  }
}

inline void avgpool2_forward(const double* in, std::size_t c, std::size_t h, std::size_t w, double* out) {
  const std::size_t oh = h / 2, ow = w / 2;
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        const double* p = in + k * h * w + 2 * y * w + 2 * x;
        out[k * oh * ow + y * ow + x] = 0.25 * (p[0] + p[1] + p[w] + p[w + 1]);
      }
}

inline void avgpool2_backward(const double* d_out, std::size_t c, std::size_t h, std::size_t w, double* d_in) {
  const std::size_t oh = h / 2, ow = w / 2;
  std::fill(d_in, d_in + c * h * w, 0.0);
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        const double g = 0.25 * d_out[k * oh * ow + y * ow + x];
        double* p = d_in + k * h * w + 2 * y * w + 2 * x;
        p[0] += g;
        p[1] += g;
        p[w] += g;
        p[w + 1] += g;
      }
}

inline std::uint64_t seed_from_initialization(const std::string& init) {
  if (init.rfind("seed:", 0) != 0) fail(ErrorKind::ConfigInvalid, "toy_cnn needs a 'seed:<n>' initialization");
  return std::stoull(init.substr(5));
}

}  // namespace detail

class ToyCnn {
 public:
  struct Stage {
    std::size_t in_channels, out_channels;
    Size in_size;  // conv operates at this size
    bool pooled;
    std::size_t weight_offset, bias_offset;
    Size out_size() const { return pooled ? Size{in_size.width / 2, in_size.height / 2} : in_size; }
  };

  struct Cache {
    std::vector<double> input;
    std::vector<std::vector<double>> pre_activation;  // conv output per stage
    std::vector<std::vector<double>> stage_output;    // after ReLU (+ pooling)
    std::vector<double> pooled;                       // GAP, N
  };

  explicit ToyCnn(BackboneSpec spec) : spec_(std::move(spec)) {
    if (spec_.architecture != "toy_cnn")
      fail(ErrorKind::ConfigInvalid, "no in-process adapter for architecture '" + spec_.architecture + "'");
    if (spec_.input_size < 16) fail(ErrorKind::ConfigInvalid, "toy_cnn input size must be at least 16");
    if (spec_.classes < 2) fail(ErrorKind::ConfigInvalid, "at least two classes are required");
    if (spec_.stage_widths.empty() || spec_.input_channels < 1) fail(ErrorKind::ConfigInvalid, "bad stage widths");
    std::size_t offset = 0;
    Size size{spec_.input_size, spec_.input_size};
    std::size_t channels = spec_.input_channels;
    for (std::size_t width : spec_.stage_widths) {
      Stage s{channels, width, size, size.width / 2 >= 4 && size.height / 2 >= 4, 0, 0};
      s.weight_offset = offset;
      offset += width * channels * 9;
      s.bias_offset = offset;
      offset += width;
      stages_.push_back(s);
      size = s.out_size();
      channels = width;
    }
    fc_weight_offset_ = offset;
    offset += spec_.classes * channels;
    fc_bias_offset_ = offset;
    offset += spec_.classes;
    params_.assign(offset, 0.0);
    initialize(detail::seed_from_initialization(spec_.initialization));
  }

  const BackboneSpec& spec() const { return spec_; }
  Size input_size() const { return {spec_.input_size, spec_.input_size}; }
  Size feature_size() const { return stages_.back().out_size(); }
  std::size_t feature_count() const { return stages_.back().out_channels; }
  std::span<const double> parameters() const { return params_; }
  std::span<double> parameters() { return params_; }
  std::size_t parameter_count() const { return params_.size(); }
  /// Offset of the C x N final-layer weights inside parameters().
  std::size_t class_weight_offset() const { return fc_weight_offset_; }

  std::pair<ModelProbe, Cache> forward_one(const Image& image) const {
    if (image.size() != input_size() || spec_.input_channels != 1)
      fail(ErrorKind::ShapeMismatch, "image " + to_string(image.size()) + " does not match backbone input " +
                                         to_string(input_size()));
    Cache cache;
    cache.input.resize(image.count());
    for (std::size_t k = 0; k < image.count(); ++k) cache.input[k] = image[k] - 0.5;
    const double* current = cache.input.data();
    for (const auto& s : stages_) {
      const std::size_t h = s.in_size.height, w = s.in_size.width;
      std::vector<double> z(s.out_channels * h * w);
      detail::conv3x3_forward(current, s.in_channels, h, w, &params_[s.weight_offset], &params_[s.bias_offset],
                              s.out_channels, z.data());
      std::vector<double> a(z.size());
      for (std::size_t k = 0; k < z.size(); ++k) a[k] = z[k] > 0.0 ? z[k] : 0.0;
      if (s.pooled) {
        std::vector<double> p(s.out_channels * s.out_size().area());
        detail::avgpool2_forward(a.data(), s.out_channels, h, w, p.data());
        a = std::move(p);
      }
      cache.pre_activation.push_back(std::move(z));
      cache.stage_output.push_back(std::move(a));
      current = cache.stage_output.back().data();
    }
    const std::size_t n = feature_count();
    const Size fs = feature_size();
    ModelProbe probe;
    probe.features = {n, fs, cache.stage_output.back()};
    cache.pooled.assign(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      double sum = 0.0;
      for (double v : probe.features.map(k)) sum += v;
      cache.pooled[k] = sum / static_cast<double>(fs.area());
    }
    probe.class_weights.assign(params_.begin() + static_cast<std::ptrdiff_t>(fc_weight_offset_),
                               params_.begin() + static_cast<std::ptrdiff_t>(fc_weight_offset_ + spec_.classes * n));
    probe.logits.assign(spec_.classes, 0.0);
    for (std::size_t c = 0; c < spec_.classes; ++c) {
      double z = params_[fc_bias_offset_ + c];
      for (std::size_t k = 0; k < n; ++k) z += probe.class_weights[c * n + k] * cache.pooled[k];
      probe.logits[c] = z;
    }
    return {std::move(probe), std::move(cache)};
  }

  ModelProbe probe(const Image& image) const { return forward_one(image).first; }

  /// Accumulates d(loss)/d(parameters) into `param_grad`.
  void backward_one(const Cache& cache, const ProbeGradient& grad, std::span<double> param_grad) const {
    if (param_grad.size() != params_.size()) fail(ErrorKind::ShapeMismatch, "parameter gradient size");
    const std::size_t n = feature_count();
    const std::size_t classes = spec_.classes;
    const Size fs = feature_size();
    std::vector<double> d_pooled(n, 0.0);
    for (std::size_t c = 0; c < classes; ++c) {
      const double g = grad.d_logits[c];
      param_grad[fc_bias_offset_ + c] += g;
      for (std::size_t k = 0; k < n; ++k) {
        param_grad[fc_weight_offset_ + c * n + k] += g * cache.pooled[k] + grad.d_class_weights[c * n + k];
        d_pooled[k] += g * params_[fc_weight_offset_ + c * n + k];
      }
    }
    std::vector<double> d_out(grad.d_features);
    const double inv_area = 1.0 / static_cast<double>(fs.area());
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t j = 0; j < fs.area(); ++j) d_out[k * fs.area() + j] += d_pooled[k] * inv_area;

    for (std::size_t si = stages_.size(); si-- > 0;) {
      const auto& s = stages_[si];
      const std::size_t h = s.in_size.height, w = s.in_size.width;
      std::vector<double> d_z(s.out_channels * h * w);
      if (s.pooled) detail::avgpool2_backward(d_out.data(), s.out_channels, h, w, d_z.data());
      else d_z = d_out;
      const auto& z = cache.pre_activation[si];
      for (std::size_t k = 0; k < d_z.size(); ++k)
        if (!(z[k] > 0.0)) d_z[k] = 0.0;
      const double* input = si == 0 ? cache.input.data() : cache.stage_output[si - 1].data();
      std::vector<double> d_in;
      if (si > 0) d_in.assign(s.in_channels * h * w, 0.0);
      detail::conv3x3_backward(input, s.in_channels, h, w, &params_[s.weight_offset], s.out_channels, d_z.data(),
                               &param_grad[s.weight_offset], &param_grad[s.bias_offset], si > 0 ? d_in.data() : nullptr);
      d_out = std::move(d_in);
    }
  }

 private:
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (const auto& s : stages_) {
      std::normal_distribution<double> he(0.0, std::sqrt(2.0 / static_cast<double>(s.in_channels * 9)));
      for (std::size_t k = 0; k < s.out_channels * s.in_channels * 9; ++k) params_[s.weight_offset + k] = he(rng);
      for (std::size_t k = 0; k < s.out_channels; ++k) params_[s.bias_offset + k] = 0.01;
    }
    std::normal_distribution<double> fc(0.0, std::sqrt(1.0 / static_cast<double>(feature_count())));
    for (std::size_t k = 0; k < spec_.classes * feature_count(); ++k) params_[fc_weight_offset_ + k] = fc(rng);
  }

  BackboneSpec spec_;
  std::vector<Stage> stages_;
  std::size_t fc_weight_offset_ = 0;
  std::size_t fc_bias_offset_ = 0;
  std::vector<double> params_;
};

static_assert(ProbeBackbone<ToyCnn>);

inline ToyCnn make_toy_cnn(std::uint64_t seed, std::size_t input_size, std::size_t classes) {
  BackboneSpec spec;
  spec.input_size = input_size;
  spec.classes = classes;
  spec.initialization = "seed:" + std::to_string(seed);
  return ToyCnn(std::move(spec));
}

/// Probes for a batch; one forward pass per sample.
template <ProbeBackbone Model>
std::vector<ModelProbe> forward_with_probe(const Model& model, std::span<const Image> batch) {
  if (batch.empty()) fail(ErrorKind::EmptyInput, "empty batch");
  std::vector<ModelProbe> probes;
  probes.reserve(batch.size());
  for (const auto& image : batch) probes.push_back(model.forward_one(image).first);
  return probes;
}

// ---------------------------------------------------------------------------
// Checkpoints: "CYBORGCK" magic, u32 version, u64 header length, JSON header
// (spec, epoch, metrics), u64 parameter count, little-endian f64 parameters.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  BackboneSpec spec;
  int epoch = 0;
  std::map<std::string, double> metrics;
  std::vector<double> parameters;
};

namespace detail {

template <class T>
void put(std::ostream& out, T v) {
  static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) fail(ErrorKind::Io, "truncated checkpoint");
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write checkpoint " + path.string());
  const std::string header = nlohmann::json{{"spec", ck.spec}, {"epoch", ck.epoch}, {"metrics", ck.metrics}}.dump();
  out.write("CYBORGCK", 8);
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  detail::put<std::uint64_t>(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  detail::put<std::uint64_t>(out, ck.parameters.size());
  for (double p : ck.parameters) detail::put<double>(out, p);
  if (!out) fail(ErrorKind::Io, "failed writing checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingFile, "cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "CYBORGCK", 8) != 0) fail(ErrorKind::SchemaError, "not a checkpoint file");
  if (const auto version = detail::get<std::uint32_t>(in); version != kCheckpointVersion)
    fail(ErrorKind::SchemaError, "unsupported checkpoint version " + std::to_string(version));
  std::string header(detail::get<std::uint64_t>(in), '\0');
  in.read(header.data(), static_cast<std::streamsize>(header.size()));
  if (!in) fail(ErrorKind::Io, "truncated checkpoint header");
  Checkpoint ck;
  try {
    const auto j = nlohmann::json::parse(header);
    j.at("spec").get_to(ck.spec);
    j.at("epoch").get_to(ck.epoch);
    j.at("metrics").get_to(ck.metrics);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::SchemaError, std::string("checkpoint header: ") + e.what());
  }
  ck.parameters.resize(detail::get<std::uint64_t>(in));
  for (double& p : ck.parameters) p = detail::get<double>(in);
  return ck;
}

inline ToyCnn toy_cnn_from_checkpoint(const Checkpoint& ck) {
  ToyCnn model(ck.spec);
  if (ck.parameters.size() != model.parameter_count())
    fail(ErrorKind::SchemaError, "checkpoint parameter count does not match its spec");
  std::copy(ck.parameters.begin(), ck.parameters.end(), model.parameters().begin());
  return model;
}

}  // namespace cyborg
