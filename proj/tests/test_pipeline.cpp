#include <gtest/gtest.h>

#include <numeric>

#include "ftirpad/pipeline.hpp"
#include "ftirpad/simulator.hpp"
#include "reference.hpp"

using namespace ftirpad;

namespace {

FingerSpec finger() {
  FingerSpec f;
  f.subject_id = "s00";
  f.finger_id = "f0";
  f.pattern_seed = 77;
  return f;
}

RenderedViews render(double pressure, const PerspectiveTransform& distortion = PerspectiveTransform::identity()) {
  RenderSettings rs;
  rs.ftir_distortion = distortion;
  Pose pose;
  pose.pressure = pressure;
  return render_views(finger(), std::nullopt, pose, rs, 5);
}

constexpr NativePpi kSimPpi{20.0 * 25.4, 20.0 * 25.4};

/// Coarse finger-region mask: 8x8 blocks holding any dark pixel.
std::vector<bool> foreground_blocks(const Image& print) {
  const int bw = print.width() / 8, bh = print.height() / 8;
  std::vector<bool> out(static_cast<std::size_t>(bw) * bh, false);
  for (int y = 0; y < bh * 8; ++y)
    for (int x = 0; x < bw * 8; ++x)
      if (print.at(x, y) < 128) out[static_cast<std::size_t>(y / 8) * bw + x / 8] = true;
  return out;
}

}  // namespace

TEST(ProcessFtir, OutputDimsFollowPpi) {
  const auto views = render(0.5);
  const Image out = process_ftir(views.ftir, PerspectiveTransform::identity(), kSimPpi);
  EXPECT_EQ(out.width(), std::lround(580 * 500 / 508.0));
  EXPECT_EQ(out.height(), std::lround(432 * 500 / 508.0));
  EXPECT_EQ(out.color_space(), ColorSpace::Gray);
  EXPECT_DOUBLE_EQ(out.ppi_x, 500);
  EXPECT_DOUBLE_EQ(out.ppi_y, 500);

  const Image half = process_ftir(views.ftir, PerspectiveTransform::identity(), {1000, 2000});
  EXPECT_EQ(half.width(), 290);
  EXPECT_EQ(half.height(), 108);
}

TEST(ProcessFtir, RidgesDarkBackgroundBright) {
  const auto views = render(0.5);
  const Image out = process_ftir(views.ftir, PerspectiveTransform::identity(), kSimPpi);
  const Image mask = downsample_box(views.contact_mask, out.width(), out.height());
  std::vector<int> ridge, bg;
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      if (mask.at(x, y) == 255) ridge.push_back(out.at(x, y));
      else if (mask.at(x, y) == 0) bg.push_back(out.at(x, y));
    }
  ASSERT_GT(ridge.size(), 1000u);
  ASSERT_GT(bg.size(), 1000u);
  auto mean = [](const std::vector<int>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  const double cut = 0.5 * (mean(ridge) + mean(bg));
  EXPECT_LT(cut, 128);
  // Equalization spreads the sensor noise of the empty platen over the upper
  // range, so the background is bright on average rather than saturated.
  EXPECT_GE(std::count_if(ridge.begin(), ridge.end(), [&](int v) { return v < cut; }) / double(ridge.size()), 0.98);
  EXPECT_GE(std::count_if(bg.begin(), bg.end(), [&](int v) { return v > cut; }) / double(bg.size()), 0.9);
  EXPECT_GE(std::count_if(ridge.begin(), ridge.end(), [](int v) { return v < 128; }) / double(ridge.size()), 0.98);
}

TEST(ProcessFtir, FrontalizesKeystonedCapture) {
  const PerspectiveTransform distortion({0.95, 0.04, 12, -0.02, 0.9, 18, 1.5e-4, -1.0e-4});
  const auto views = render(0.5, distortion);
  const Image out = process_ftir(views.ftir, distortion.inverse(), kSimPpi);
  const Image frontal_mask = apply_perspective(distortion.inverse(), views.contact_mask, 580, 432);
  const Image mask = downsample_box(frontal_mask, out.width(), out.height());
  int ridge = 0, ridge_dark = 0;
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      if (mask.at(x, y) == 255) {
        ++ridge;
        ridge_dark += out.at(x, y) < 128;
      }
  ASSERT_GT(ridge, 1000);
  EXPECT_GE(double(ridge_dark) / ridge, 0.95);
}

TEST(ProcessFtir, Deterministic) {
  const auto a = render(0.5), b = render(0.5);
  EXPECT_EQ(a.ftir, b.ftir);
  EXPECT_EQ(process_ftir(a.ftir, ref::keystone(), kSimPpi), process_ftir(b.ftir, ref::keystone(), kSimPpi));
}

TEST(ProcessFtir, ForegroundStableAcrossPressure) {
  const auto lo = foreground_blocks(process_ftir(render(0.4).ftir, PerspectiveTransform::identity(), kSimPpi));
  const auto hi = foreground_blocks(process_ftir(render(0.6).ftir, PerspectiveTransform::identity(), kSimPpi));
  int inter = 0, uni = 0;
  for (std::size_t i = 0; i < lo.size(); ++i) {
    inter += lo[i] && hi[i];
    uni += lo[i] || hi[i];
  }
  ASSERT_GT(uni, 0);
  EXPECT_GE(double(inter) / uni, 0.8);
}

TEST(ProcessFtir, PerCellModeMatchesGlobalOnUniformBoard) {
  const auto views = render(0.5);
  // 1000 ppi halves the frame exactly, so both modes share pixel boundaries.
  const double step = 4.0 / 25.4 * 1000;
  Correspondences c;
  for (int v = 0; v <= 4; ++v)
    for (int u = 0; u <= 6; ++u) c.push_back({{step * u, step * v}, {double(u), double(v)}});
  const ResolutionMap rm = estimate_resolution(c, 4.0);
  ProcessOptions opts;
  opts.mode = ResampleMode::PerCell;
  opts.resolution = &rm;
  const Image per_cell = process_ftir(views.ftir, PerspectiveTransform::identity(), {1000, 1000}, opts);
  const Image global = process_ftir(views.ftir, PerspectiveTransform::identity(), {1000, 1000});
  EXPECT_NEAR(per_cell.width(), global.width(), 1);
  EXPECT_NEAR(per_cell.height(), global.height(), 1);
  const int w = std::min(per_cell.width(), global.width()), h = std::min(per_cell.height(), global.height());
  double diff = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) diff += std::abs(int(per_cell.at(x, y)) - int(global.at(x, y)));
  EXPECT_LE(diff / (w * h), 1.0);

  opts.resolution = nullptr;
  EXPECT_THROW(process_ftir(views.ftir, PerspectiveTransform::identity(), kSimPpi, opts), ConfigError);
}

TEST(ProcessFtir, RejectsBadInput) {
  const Image gray(20, 20, ColorSpace::Gray, 3);
  EXPECT_THROW(process_ftir(gray, PerspectiveTransform::identity(), kSimPpi), DataError);
  const Image rgb(20, 20, ColorSpace::Rgb, 3);
  EXPECT_THROW(process_ftir(rgb, PerspectiveTransform::identity(), {0, 500}), ConfigError);
}
