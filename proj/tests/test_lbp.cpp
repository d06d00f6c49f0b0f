#include <gtest/gtest.h>

#include <set>

#include "ftirpad/lbp.hpp"
#include "ftirpad/simulator.hpp"
#include "reference.hpp"

using namespace ftirpad;

namespace {

double l1(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
  return d;
}

Image rotate90(const Image& img) {
  Image out(img.height(), img.width(), img.color_space());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) out.at(y, img.width() - 1 - x, c) = img.at(x, y, c);
  return out;
}

Image binary_image(int w, int h, std::uint64_t seed) {
  Image img = ref::random_image(w, h, ColorSpace::Gray, seed, 0, 1);
  for (auto& v : img.data()) v = v ? 255 : 0;
  return img;
}

}  // namespace

TEST(Riu2, EnumerationOfEightBitPatterns) {
  int uniform = 0;
  std::set<int> labels;
  for (std::uint32_t code = 0; code < 256; ++code) {
    if (circular_transitions(code, 8) <= 2) ++uniform;
    labels.insert(riu2_label(code, 8));
    if (circular_transitions(code, 8) > 2) EXPECT_EQ(riu2_label(code, 8), 9);
  }
  EXPECT_EQ(uniform, 58);
  EXPECT_EQ(labels.size(), 10u);
}

TEST(LbpHist, ConstantImageFillsTopUniformBin) {
  const Image c(12, 12, ColorSpace::Gray, 90);
  for (auto [p, r] : {std::pair{8, 1.0}, {16, 2.0}, {24, 3.0}}) {
    const auto h = lbp_hist(c, c, p, r);
    EXPECT_DOUBLE_EQ(h.bins[static_cast<std::size_t>(p)], 1.0);
  }
}

TEST(LbpHist, BrightCenterDarkNeighborsFillBinZero) {
  const Image center(10, 10, ColorSpace::Gray, 255), neighbor(10, 10, ColorSpace::Gray, 0);
  EXPECT_DOUBLE_EQ(lbp_hist(center, neighbor, 8, 1).bins[0], 1.0);
}

TEST(LbpHist, UnitCheckerboardMatchesOracle) {
  Image img(8, 8, ColorSpace::Gray);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) img.at(x, y) = (x + y) % 2 ? 255 : 0;
  const auto h = lbp_hist(img, img, 8, 1);
  const auto want = ref::brute_lbp_hist(img, img, 8, 1);
  for (std::size_t b = 0; b < want.size(); ++b) EXPECT_NEAR(h.bins[b], want[b], 1e-12) << b;
}

TEST(LbpHist, BinaryCorpusMatchesOracle) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Image img = binary_image(8, 8, 1000 + seed);
    for (auto [p, r] : {std::pair{8, 1.0}, {16, 2.0}, {24, 3.0}}) {
      const auto h = lbp_hist(img, img, p, r);
      const auto want = ref::brute_lbp_hist(img, img, p, r);
      for (std::size_t b = 0; b < want.size(); ++b) ASSERT_NEAR(h.bins[b], want[b], 1e-12) << "seed " << seed << " P " << p;
    }
  }
}

TEST(LbpHist, GrayTexturesMatchOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Image a = ref::random_image(24, 20, ColorSpace::Gray, seed);
    const Image b = ref::random_image(24, 20, ColorSpace::Gray, seed + 100);
    for (auto [p, r] : {std::pair{8, 1.0}, {16, 2.0}, {24, 3.0}, {12, 1.5}}) {
      const auto h = lbp_hist(a, b, p, r);
      const auto want = ref::brute_lbp_hist(a, b, p, r);
      for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(h.bins[i], want[i], 1e-12);
    }
  }
}

TEST(LbpHist, Errors) {
  const Image a(10, 10, ColorSpace::Gray), b(11, 10, ColorSpace::Gray), rgb(10, 10, ColorSpace::Rgb);
  EXPECT_THROW(lbp_hist(a, b, 8, 1), DataError);
  EXPECT_THROW(lbp_hist(rgb, rgb, 8, 1), DataError);
  const Image tiny(6, 6, ColorSpace::Gray);
  EXPECT_THROW(lbp_hist(tiny, tiny, 24, 3), DataError);
  EXPECT_THROW(lbp_hist(a, a, 3, 1), ConfigError);
}

TEST(LbpHist, InvariantToMonotoneRemapOnIntegerTaps) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    std::array<std::uint8_t, 256> lut{};
    // Strictly increasing map onto a random subset of levels.
    std::vector<int> levels(256);
    std::iota(levels.begin(), levels.end(), 0);
    std::vector<int> pick;
    int v = 0;
    for (int i = 0; i < 256; ++i) pick.push_back(i);
    rng.shuffle(pick);
    pick.resize(128);
    std::sort(pick.begin(), pick.end());
    for (int i = 0; i < 256; ++i) lut[i] = static_cast<std::uint8_t>(pick[static_cast<std::size_t>(std::min(i / 2, 127))]);
    (void)v;
    const Image img = ref::random_image(30, 30, ColorSpace::Gray, seed, 0, 127);
    Image mapped = img;
    for (auto& px : mapped.data()) px = lut[px * 2];
    Image doubled = img;
    for (auto& px : doubled.data()) px = static_cast<std::uint8_t>(px * 2);
    for (auto [p, r] : {std::pair{4, 1.0}, {4, 2.0}}) {
      const auto a = lbp_hist(doubled, doubled, p, r).bins;
      const auto b = lbp_hist(mapped, mapped, p, r).bins;
      EXPECT_EQ(a, b);
    }
  }
}

TEST(LbpHist, NearlyInvariantToMonotoneRemapOnSmoothTexture) {
  const Image img = ref::smooth_texture(100, 90, 3);
  Image mapped = img;
  for (auto& px : mapped.data()) px = saturate_u8(255.0 * std::pow(px / 255.0, 0.8));
  const auto a = lbp_descriptor(img), b = lbp_descriptor(mapped);
  EXPECT_LE(l1(a.values, b.values) / 3, 0.1);
}

TEST(LbpDescriptor, DimensionsAndConstantImage) {
  const Image c(40, 30, ColorSpace::Gray, 12);
  const auto fv = lbp_descriptor(c);
  ASSERT_EQ(fv.dim(), 54u);
  EXPECT_EQ(fv.kind, DescriptorKind::Lbp);
  EXPECT_DOUBLE_EQ(fv.values[8], 1.0);
  EXPECT_DOUBLE_EQ(fv.values[10 + 16], 1.0);
  EXPECT_DOUBLE_EQ(fv.values[10 + 18 + 24], 1.0);
  EXPECT_EQ(LbpConfig{}.block_dim(), 54);
}

TEST(LbpDescriptor, EveryBlockIsNormalized) {
  const Image img = ref::random_image(145, 108, ColorSpace::Rgb, 9);
  const auto fv = clbp_descriptor(rgb_to_hsv(img));
  std::size_t off = 0;
  for (int pair = 0; pair < 9; ++pair)
    for (int bins : {10, 18, 26}) {
      double s = 0;
      for (int b = 0; b < bins; ++b) s += fv.values[off + static_cast<std::size_t>(b)];
      EXPECT_NEAR(s, 1.0, 1e-9);
      off += static_cast<std::size_t>(bins);
    }
  EXPECT_EQ(off, 486u);
  EXPECT_FALSE(fv.has_empty_histogram);
}

TEST(LbpDescriptor, RotationByNinetyDegrees) {
  RenderSettings rs;
  FingerSpec f;
  f.pattern_seed = 12;
  const auto views = render_views(f, std::nullopt, {}, rs, 1);
  const Image gray = preprocess_for_lbp(views.ftir, View::Ftir);
  EXPECT_LE(l1(lbp_descriptor(gray).values, lbp_descriptor(rotate90(gray)).values), 0.05);
  const Image tex = ref::smooth_texture(120, 100, 8);
  EXPECT_LE(l1(lbp_descriptor(tex).values, lbp_descriptor(rotate90(tex)).values), 0.05);
}

TEST(ClbpDescriptor, DimensionAndChannelSymmetry) {
  const Image g = ref::random_image(40, 40, ColorSpace::Gray, 4);
  Image same(40, 40, ColorSpace::Hsv);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x)
      for (int c = 0; c < 3; ++c) same.at(x, y, c) = g.at(x, y);
  const auto fv = clbp_descriptor(same);
  ASSERT_EQ(fv.dim(), 486u);
  EXPECT_EQ(fv.kind, DescriptorKind::Clbp);
  for (int blk = 1; blk < 9; ++blk)
    for (std::size_t k = 0; k < 54; ++k) EXPECT_EQ(fv.values[blk * 54 + k], fv.values[k]);
  EXPECT_THROW(clbp_descriptor(g), DataError);
}

TEST(ClbpDescriptor, SaturationValueBlockMatchesOracle) {
  const Image hsv = rgb_to_hsv(ref::random_image(30, 26, ColorSpace::Rgb, 17));
  const auto fv = clbp_descriptor(hsv);
  // i = 2 (S) outer, j = 3 (V) inner: pair index (1, 2) -> block 5.
  const std::size_t base = 5 * 54;
  std::size_t off = base;
  for (auto [p, r] : {std::pair{8, 1.0}, {16, 2.0}, {24, 3.0}}) {
    const auto want = ref::brute_lbp_hist(hsv.channel(1), hsv.channel(2), p, r);
    for (std::size_t b = 0; b < want.size(); ++b) EXPECT_NEAR(fv.values[off + b], want[b], 1e-12);
    off += want.size();
  }
}

TEST(Preprocess, DescriptorSizes) {
  const Image raw = ref::random_image(580, 432, ColorSpace::Rgb, 2);
  const Image hsv = preprocess_for_clbp(raw, View::Ftir);
  EXPECT_EQ(hsv.width(), 145);
  EXPECT_EQ(hsv.height(), 108);
  EXPECT_EQ(hsv.color_space(), ColorSpace::Hsv);
  const Image gray = preprocess_for_lbp(ref::random_image(580, 384, ColorSpace::Rgb, 2), View::Direct);
  EXPECT_EQ(gray.width(), 145);
  EXPECT_EQ(gray.height(), 96);
}

TEST(Fusion, ConcatenatesInOrder) {
  FeatureVector a, b;
  a.kind = b.kind = DescriptorKind::Clbp;
  a.values.assign(486, 0.25);
  b.values.assign(486, 0.5);
  const auto ab = fuse_features(a, b), ba = fuse_features(b, a);
  EXPECT_EQ(ab.dim(), 972u);
  EXPECT_EQ(ab.kind, DescriptorKind::Fused);
  EXPECT_EQ(ab.values[0], 0.25);
  EXPECT_EQ(ab.values[486], 0.5);
  EXPECT_NE(ab.values, ba.values);
  EXPECT_EQ(fuse_features(a, a).values, fuse_features(a, a).values);
  EXPECT_EQ(fuse_features(a, FeatureVector{}).values, a.values);
  FeatureVector bad = a;
  bad.values[3] = std::nan("");
  EXPECT_THROW(fuse_features(bad, b), DataError);
}
