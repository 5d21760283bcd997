#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "cyborg/ablations.hpp"
#include "cyborg/image_io.hpp"
#include "oracles.hpp"

using namespace cyborg;
namespace fs = std::filesystem;

TEST(NoiseSaliency, SameSeedSameMap) {
  EXPECT_EQ(noise_saliency({9, 7}, 42), noise_saliency({9, 7}, 42));
  EXPECT_FALSE(noise_saliency({9, 7}, 42) == noise_saliency({9, 7}, 43));
}

TEST(NoiseSaliency, UniformMeanAndRange) {
  const auto m = noise_saliency({100, 100}, 7);
  for (double v : m.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_NEAR(mean(m.values()), 0.5, 0.02);
  EXPECT_EQ(m.source(), SaliencySource::ablation);
}

TEST(SampleSeed, DependsOnIdAndBase) {
  EXPECT_EQ(sample_seed(3, "a"), sample_seed(3, "a"));
  EXPECT_NE(sample_seed(3, "a"), sample_seed(3, "b"));
  EXPECT_NE(sample_seed(3, "a"), sample_seed(4, "a"));
}

TEST(InvertSaliency, ZerosBecomeOnes) {
  const SaliencyMap zeros(Map(4, 3, 0.0), SaliencySource::annotation);
  const auto ones = invert_saliency(zeros);
  for (double v : ones.values()) EXPECT_EQ(v, 1.0);
}

TEST(InvertSaliency, InvolutionAndMean) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    const SaliencyMap m(oracle::random_map(rng, 7, 7), SaliencySource::synthetic);
    const auto twice = invert_saliency(invert_saliency(m));
    for (std::size_t i = 0; i < m.values().count(); ++i) EXPECT_NEAR(twice.values()[i], m.values()[i], 1e-15);
    double direct = 0.0;
    const Map& values = m.values();
    for (double v : values) direct += 1.0 - v;
    EXPECT_NEAR(mean(invert_saliency(m).values()), direct / 49.0, 1e-15);
    EXPECT_NEAR(mean(invert_saliency(m).values()), 1.0 - mean(m.values()), 1e-12);
  }
}

TEST(GaussianKernel, PeakAtCenterOddDims) {
  const auto m = gaussian_kernel_saliency({9, 7});
  EXPECT_EQ(m(4, 3), 1.0);
  for (std::size_t y = 0; y < 7; ++y)
    for (std::size_t x = 0; x < 9; ++x) {
      if (x != 4 || y != 3) {
        EXPECT_LT(m(x, y), 1.0);
      }
    }
}

TEST(GaussianKernel, MirrorSymmetric) {
  for (Size s : {Size{8, 8}, Size{7, 10}, Size{13, 5}}) {
    const auto m = gaussian_kernel_saliency(s, 0.3);
    for (std::size_t y = 0; y < s.height; ++y)
      for (std::size_t x = 0; x < s.width; ++x) {
        EXPECT_NEAR(m(x, y), m(s.width - 1 - x, y), 1e-15);
        EXPECT_NEAR(m(x, y), m(x, s.height - 1 - y), 1e-15);
      }
  }
}

TEST(GaussianKernel, DecaysAlongCenterRow) {
  const auto m = gaussian_kernel_saliency({15, 15});
  for (std::size_t x = 7; x + 1 < 15; ++x) EXPECT_GT(m(x, 7), m(x + 1, 7));
  EXPECT_THROW(gaussian_kernel_saliency({5, 5}, 0.0), Error);
}

TEST(Binarize, Idempotent) {
  std::mt19937_64 rng(2);
  const Map m = oracle::random_map(rng, 6, 6);
  const Map b = binarize(m);
  EXPECT_EQ(binarize(b), b);
  for (std::size_t i = 0; i < m.count(); ++i) EXPECT_EQ(b[i], m[i] >= 0.5 ? 1.0 : 0.0);
}

class MaskFile : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / "cyborg_ablation_masks";
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  fs::path dir_;
};

TEST_F(MaskFile, AllForegroundIsAllOnes) {
  io::store_gray_png(dir_ / "full.png", Map(10, 10, 1.0));
  const auto m = mask_to_saliency(dir_ / "full.png");
  for (double v : m.values()) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(m.source(), SaliencySource::mask);
}

TEST_F(MaskFile, ForegroundFractionPreserved) {
  // 37 of 100 pixels foreground, painted at gray levels above and below 0.5.
  Map painted(10, 10, 0.3);
  for (std::size_t i = 0; i < 37; ++i) painted[(i * 7) % 100] = 0.8;
  io::store_gray_png(dir_ / "part.png", painted);
  EXPECT_NEAR(mean(mask_to_saliency(dir_ / "part.png").values()), 0.37, 1.0 / (2 * 255));
}

TEST_F(MaskFile, UnreadableOrMultiChannel) {
  try {
    mask_to_saliency(dir_ / "missing.png");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnreadableMask);
  }
  io::RawImage rgb{2, 2, 3, std::vector<unsigned char>(12, 255)};
  io::write_png(dir_ / "rgb.png", rgb);
  try {
    mask_to_saliency(dir_ / "rgb.png");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnreadableMask);
  }
}

TEST(SaliencySource, NamesRoundTrip) {
  for (auto k : {SaliencySourceKind::human, SaliencySourceKind::noise, SaliencySourceKind::inverted,
                 SaliencySourceKind::gaussian, SaliencySourceKind::mask})
    EXPECT_EQ(parse_saliency_source(to_string(k)), k);
  EXPECT_FALSE(parse_saliency_source("blur"));
}
