#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "cyborg/evaluation.hpp"
#include "oracles.hpp"

using namespace cyborg;
namespace fs = std::filesystem;

namespace {

struct Instance {
  std::vector<double> scores;
  std::vector<int> labels;
};

// Scores drawn from a small set of levels so ties are common.
Instance random_instance(std::mt19937_64& rng, bool force_both) {
  std::uniform_int_distribution<int> n_dist(2, 100), level(0, 9), bit(0, 1);
  Instance in;
  const int n = n_dist(rng);
  const bool coarse = bit(rng) == 1;
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < n; ++i) {
    in.scores.push_back(coarse ? level(rng) / 10.0 : u(rng));
    in.labels.push_back(bit(rng));
  }
  if (force_both) {
    in.labels[0] = 1;
    in.labels[1] = 0;
  }
  return in;
}

// Backbone whose probe is fixed by the image: features are the image itself
// (one map), with unit class weights, so the CAM equals the image.
struct IdentityBackbone {
  struct Cache {};
  BackboneSpec spec_;
  Size size_{4, 4};
  std::vector<double> params_{1.0, 1.0};
  const BackboneSpec& spec() const { return spec_; }
  Size feature_size() const { return size_; }
  std::pair<ModelProbe, Cache> forward_one(const Image& image) const {
    ModelProbe p;
    p.features = {1, size_, {image.begin(), image.end()}};
    p.class_weights = {params_[0], params_[1]};
    p.logits = {0.0, mean(image)};
    return {p, {}};
  }
  void backward_one(const Cache&, const ProbeGradient&, std::span<double>) const {}
  std::span<const double> parameters() const { return params_; }
  std::span<double> parameters() { return params_; }
};
static_assert(ProbeBackbone<IdentityBackbone>);

Sample sample_with(Map image, std::optional<Map> human = std::nullopt, Label label = Label::typical) {
  Sample s{"s", std::move(image), label, std::nullopt};
  if (human) s.saliency = SaliencyMap(*human, SaliencySource::annotation);
  return s;
}

}  // namespace

TEST(RocAuc, SeparatedAndConstant) {
  const std::vector<double> s{0.1, 0.2, 0.8, 0.9};
  const std::vector<int> l{0, 0, 1, 1};
  EXPECT_EQ(roc_auc(s, l), 1.0);
  const std::vector<double> same(4, 0.3);
  EXPECT_EQ(roc_auc(same, l), 0.5);
}

TEST(RocAuc, MatchesPairwiseOracle) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 500; ++t) {
    const auto in = random_instance(rng, true);
    EXPECT_EQ(roc_auc(in.scores, in.labels), oracle::pairwise_auc(in.scores, in.labels));
  }
}

TEST(RocAuc, InvariantUnderMonotoneTransformAndNegation) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> s(60), t(60), neg(60);
  std::vector<int> l(60);
  for (int i = 0; i < 60; ++i) {
    s[i] = u(rng);
    t[i] = std::exp(3 * s[i]) - 7;
    neg[i] = -s[i];
    l[i] = i % 3 == 0;
  }
  EXPECT_EQ(roc_auc(s, l), roc_auc(t, l));
  EXPECT_NEAR(roc_auc(s, l) + roc_auc(neg, l), 1.0, 1e-15);
}

TEST(RocAuc, SingleClass) {
  const std::vector<double> s{0.1, 0.2};
  const std::vector<int> l{1, 1};
  try {
    roc_auc(s, l);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SingleClass);
  }
}

TEST(AveragePrecision, ClosedForms) {
  const std::vector<double> s{0.9, 0.8, 0.3, 0.1};
  EXPECT_EQ(average_precision(s, std::vector<int>{1, 1, 0, 0}), 1.0);
  for (int k = 1; k <= 4; ++k) {
    std::vector<int> l(4, 0);
    l[static_cast<std::size_t>(k - 1)] = 1;
    EXPECT_DOUBLE_EQ(average_precision(s, l), 1.0 / k);
  }
  try {
    average_precision(s, std::vector<int>(4, 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoPositives);
  }
}

TEST(AveragePrecision, MatchesBruteForce) {
  std::mt19937_64 rng(22);
  for (int t = 0; t < 500; ++t) {
    auto in = random_instance(rng, false);
    in.labels[0] = 1;
    EXPECT_EQ(average_precision(in.scores, in.labels), oracle::brute_force_ap(in.scores, in.labels));
  }
}

TEST(AverageCam, OneSampleIsItsNormalizedCam) {
  std::mt19937_64 rng(3);
  const Map img = oracle::random_map(rng, 4, 4);
  const IdentityBackbone model;
  const std::vector<Sample> split{sample_with(img)};
  EXPECT_EQ(average_cam(model, split).values(), normalize01(img));
}

TEST(AverageCam, DisjointHotspotsAverageToHalf) {
  Map a(4, 4, 0.0), b(4, 4, 0.0);
  a(0, 0) = 1.0;
  b(3, 2) = 1.0;
  const IdentityBackbone model;
  const auto avg = average_cam(model, std::vector<Sample>{sample_with(a), sample_with(b)});
  EXPECT_EQ(avg(0, 0), 0.5);
  EXPECT_EQ(avg(3, 2), 0.5);
  EXPECT_EQ(avg(1, 1), 0.0);
}

TEST(AverageCam, OrderIndependentAndBounded) {
  std::mt19937_64 rng(8);
  std::vector<Sample> split;
  for (int i = 0; i < 6; ++i) split.push_back(sample_with(oracle::random_map(rng, 4, 4)));
  const IdentityBackbone model;
  const auto fwd = average_cam(model, split);
  std::reverse(split.begin(), split.end());
  const auto rev = average_cam(model, split);
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_NEAR(fwd.values()[i], rev.values()[i], 1e-15);
    EXPECT_GE(fwd.values()[i], 0.0);
    EXPECT_LE(fwd.values()[i], 1.0);
  }
  EXPECT_THROW(average_cam(model, std::vector<Sample>{}), Error);
}

TEST(AverageCam, ToyCnnRendersPng) {
  const auto model = make_toy_cnn(1, 16, 2);
  std::mt19937_64 rng(2);
  const std::vector<Sample> split{sample_with(oracle::random_map(rng, 16, 16))};
  const auto cam = average_cam(model, split);
  EXPECT_EQ(cam.size(), model.feature_size());
  const auto png = fs::temp_directory_path() / "cyborg_avg_cam.png";
  render_cam(cam, png, 8);
  const auto raw = io::read_png(png);
  EXPECT_EQ(raw.width, 32u);
  EXPECT_EQ(raw.channels, 3);
}

TEST(Agreement, ZeroWhenCamMatchesHuman) {
  Map h(4, 4, 0.0);
  h(1, 1) = 1.0;
  h(2, 1) = 0.5;
  const IdentityBackbone model;
  const auto d = cam_human_agreement(model, std::vector<Sample>{sample_with(h, h)});
  for (auto [m, v] : d) EXPECT_NEAR(v, 0.0, 1e-12) << to_string(m);
}

TEST(Agreement, InvertedMapsScoreWorse) {
  std::mt19937_64 rng(12);
  const IdentityBackbone model;
  std::vector<Sample> truth, inverted;
  for (int i = 0; i < 5; ++i) {
    const Map img = oracle::random_map(rng, 4, 4);
    const Map h = normalize01(img);
    truth.push_back(sample_with(img, h));
    inverted.push_back(sample_with(img, invert_saliency(SaliencyMap(h, SaliencySource::annotation)).values()));
  }
  const auto a = cam_human_agreement(model, truth);
  const auto b = cam_human_agreement(model, inverted);
  for (auto m : kAllMeasures) EXPECT_GT(b.at(m), a.at(m)) << to_string(m);
}

TEST(Agreement, HandBuiltL1) {
  Map img(2, 2);
  img[0] = 0.0, img[1] = 1.0, img[2] = 0.5, img[3] = 0.25;  // already spans [0,1]
  Map h(2, 2);
  h[0] = 0.5, h[1] = 1.0, h[2] = 0.0, h[3] = 0.25;
  IdentityBackbone model;
  model.size_ = {2, 2};
  const MeasureKind l1[] = {MeasureKind::L1};
  EXPECT_DOUBLE_EQ(cam_human_agreement(model, std::vector<Sample>{sample_with(img, h)}, l1).at(MeasureKind::L1),
                   (0.5 + 0.0 + 0.5 + 0.0) / 4);
  std::vector<Sample> bare{sample_with(img)};
  try {
    cam_human_agreement(model, bare);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingSaliency);
  }
}

TEST(Crossover, InterpolatesMidpoint) {
  const auto x = scaling_crossover(0.85, {{1.0, 0.80}, {2.0, 0.90}});
  ASSERT_TRUE(x);
  // 0.85 - 0.80 and 0.90 - 0.80 are not exact in binary; the result is 1.5 to rounding.
  EXPECT_NEAR(*x, 1.5, 1e-12);
}

TEST(Crossover, AlreadyReachedAndNotReached) {
  EXPECT_EQ(scaling_crossover(0.7, {{1.0, 0.80}, {2.0, 0.90}}), 1.0);
  EXPECT_FALSE(scaling_crossover(0.95, {{1.0, 0.80}, {2.0, 0.90}, {10.0, 0.93}}));
  try {
    scaling_crossover(0.5, {{1.0, 0.8}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientPoints);
  }
}

TEST(Crossover, MonotoneInTarget) {
  const std::vector<ScalingPoint> pts{{1.0, 0.6}, {2.0, 0.7}, {3.0, 0.72}, {5.0, 0.8}, {10.0, 0.85}};
  double prev = 0.0;
  for (double t = 0.55; t <= 0.85; t += 0.01) {
    const auto x = scaling_crossover(t, pts);
    ASSERT_TRUE(x);
    EXPECT_GE(*x, prev);
    prev = *x;
  }
  const double aucs[] = {0.7, 0.8, 0.9};
  EXPECT_DOUBLE_EQ(scaling_point(2.0, aucs).mean_auc, 0.8);
}

TEST(Results, AppendAndRead) {
  const auto path = fs::temp_directory_path() / "cyborg_results_test" / "results.csv";
  fs::remove_all(path.parent_path());
  append_result(path, {"synthetic", "toy_cnn", "traditional", {0.5, 0.01}, {0.55, 0.02}});
  append_result(path, {"synthetic", "toy_cnn", "cyborg_gen", {0.7, 0.03}, {0.72, 0.0}});
  const auto rows = read_results(path);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].setting, "cyborg_gen");
  EXPECT_EQ(rows[1].auc.mean, 0.7);
  EXPECT_EQ(csv::read(path)[0], results_header());
}

TEST(Render, CurvesPlotAndColormap) {
  RunResult run;
  for (int e = 1; e <= 5; ++e) run.curves.push_back({e, 0.1 * e, 0.0, 0.1 * e, 0.2, 0.01});
  const auto png = fs::temp_directory_path() / "cyborg_curves.png";
  plot_curves(run, png);
  const auto raw = io::read_png(png);
  EXPECT_EQ(raw.channels, 3);
  EXPECT_EQ(raw.width, 480u);
  EXPECT_NE(render::colormap(0.0), render::colormap(1.0));
  EXPECT_EQ(render::colormap(-1.0), render::colormap(0.0));
}
