#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ftirpad/error.hpp"
#include "ftirpad/image.hpp"

namespace ftirpad {

// Pixel-level operations.  All are total on valid images and exact: every
// rounding step is done in integer arithmetic so results are bit-stable.

namespace detail {

/// round(num / den) for num >= 0, den > 0, halves away from zero.
constexpr std::int64_t div_round(std::int64_t num, std::int64_t den) { return (2 * num + den) / (2 * den); }

}  // namespace detail

/// BT.601 luma, gray = round(0.299 R + 0.587 G + 0.114 B).
inline Image to_grayscale(const Image& img) {
  require_color_space(img, ColorSpace::Rgb, "to_grayscale");
  Image out(img.width(), img.height(), ColorSpace::Gray);
  const auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < out.pixel_count(); ++i) {
    const std::int64_t sum = 299 * src[3 * i] + 587 * src[3 * i + 1] + 114 * src[3 * i + 2];
    dst[i] = static_cast<std::uint8_t>(detail::div_round(sum, 1000));
  }
  out.ppi_x = img.ppi_x;
  out.ppi_y = img.ppi_y;
  return out;
}

/// Global histogram equalization.  A constant image is returned unchanged
/// (the CDF remap is 0/0 there).
inline Image hist_equalize(const Image& img) {
  require_color_space(img, ColorSpace::Gray, "hist_equalize");
  std::array<std::int64_t, 256> cdf{};
  for (std::uint8_t v : img.data()) ++cdf[v];
  for (int v = 1; v < 256; ++v) cdf[v] += cdf[v - 1];
  const auto n = static_cast<std::int64_t>(img.pixel_count());
  std::int64_t cdf_min = 0;
  for (int v = 0; v < 256; ++v) {
    if (cdf[v] > 0) {
      cdf_min = cdf[v];
      break;
    }
  }
  if (cdf_min == n) return img;
  std::array<std::uint8_t, 256> lut{};
  for (int v = 0; v < 256; ++v) {
    const std::int64_t num = 255 * std::max<std::int64_t>(cdf[v] - cdf_min, 0);
    lut[v] = static_cast<std::uint8_t>(detail::div_round(num, n - cdf_min));
  }
  Image out = img;
  for (auto& v : out.data()) v = lut[v];
  return out;
}

inline Image negate(const Image& img) {
  require_color_space(img, ColorSpace::Gray, "negate");
  Image out = img;
  for (auto& v : out.data()) v = static_cast<std::uint8_t>(255 - v);
  return out;
}

/// Area-averaging downsample.  Output pixel i along an axis covers source
/// interval [i*S/T, (i+1)*S/T); each source pixel contributes its overlap
/// with that interval.  Working in units of 1/T makes all weights integers,
/// so the mean is computed exactly and rounded half-up.
inline Image downsample_box(const Image& img, int target_w, int target_h) {
  if (target_w <= 0 || target_h <= 0) throw DataError("downsample_box: target dimensions must be positive");
  if (target_w > img.width() || target_h > img.height())
    throw DataError("downsample_box: upscaling requested (" + std::to_string(img.width()) + "x" +
                    std::to_string(img.height()) + " -> " + std::to_string(target_w) + "x" +
                    std::to_string(target_h) + ")");
  const int sw = img.width(), sh = img.height(), c = img.channels();

  // Per output index, the list of (source index, integer weight).
  auto footprints = [](int src, int dst) {
    std::vector<std::vector<std::pair<int, std::int64_t>>> fp(static_cast<std::size_t>(dst));
    for (int i = 0; i < dst; ++i) {
      const std::int64_t lo = static_cast<std::int64_t>(i) * src, hi = lo + src;
      for (auto s = static_cast<int>(lo / dst); s < src && static_cast<std::int64_t>(s) * dst < hi; ++s) {
        const std::int64_t a = std::max<std::int64_t>(lo, static_cast<std::int64_t>(s) * dst);
        const std::int64_t b = std::min<std::int64_t>(hi, static_cast<std::int64_t>(s + 1) * dst);
        if (b > a) fp[i].emplace_back(s, b - a);
      }
    }
    return fp;
  };
  const auto fx = footprints(sw, target_w);
  const auto fy = footprints(sh, target_h);

  // Horizontal pass into exact integer accumulators.
  std::vector<std::int64_t> rows(static_cast<std::size_t>(sh) * target_w * c, 0);
  const auto src = img.data();
  for (int y = 0; y < sh; ++y) {
    for (int ox = 0; ox < target_w; ++ox) {
      for (int k = 0; k < c; ++k) {
        std::int64_t acc = 0;
        for (auto [sx, w] : fx[ox]) acc += w * src[(static_cast<std::size_t>(y) * sw + sx) * c + k];
        rows[(static_cast<std::size_t>(y) * target_w + ox) * c + k] = acc;
      }
    }
  }
  Image out(target_w, target_h, img.color_space());
  const std::int64_t denom = static_cast<std::int64_t>(sw) * sh;
  auto dst = out.data();
  for (int oy = 0; oy < target_h; ++oy) {
    for (int ox = 0; ox < target_w; ++ox) {
      for (int k = 0; k < c; ++k) {
        std::int64_t acc = 0;
        for (auto [sy, w] : fy[oy]) acc += w * rows[(static_cast<std::size_t>(sy) * target_w + ox) * c + k];
        dst[(static_cast<std::size_t>(oy) * target_w + ox) * c + k] =
            static_cast<std::uint8_t>(detail::div_round(acc, denom));
      }
    }
  }
  if (img.ppi_x > 0) out.ppi_x = img.ppi_x * target_w / sw;
  if (img.ppi_y > 0) out.ppi_y = img.ppi_y * target_h / sh;
  return out;
}

/// Area-averaging resample with arbitrary monotone source boundaries:
/// output pixel (i, j) averages the source rectangle
/// [x_bounds[i], x_bounds[i+1]) x [y_bounds[j], y_bounds[j+1]).
inline Image resample_area(const Image& img, const std::vector<double>& x_bounds, const std::vector<double>& y_bounds) {
  if (x_bounds.size() < 2 || y_bounds.size() < 2) throw DataError("resample_area: need at least two bounds per axis");
  const int tw = static_cast<int>(x_bounds.size()) - 1, th = static_cast<int>(y_bounds.size()) - 1;
  const int c = img.channels();
  auto weights = [](const std::vector<double>& b, int src) {
    std::vector<std::vector<std::pair<int, double>>> fp(b.size() - 1);
    for (std::size_t i = 0; i + 1 < b.size(); ++i) {
      const double lo = std::clamp(b[i], 0.0, static_cast<double>(src));
      const double hi = std::clamp(b[i + 1], 0.0, static_cast<double>(src));
      if (!(hi > lo)) throw DataError("resample_area: bounds must be strictly increasing inside the image");
      for (int s = static_cast<int>(lo); s < src && s < hi; ++s) {
        const double w = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
        if (w > 0) fp[i].emplace_back(s, w);
      }
    }
    return fp;
  };
  const auto fx = weights(x_bounds, img.width());
  const auto fy = weights(y_bounds, img.height());
  Image out(tw, th, img.color_space());
  for (int oy = 0; oy < th; ++oy) {
    for (int ox = 0; ox < tw; ++ox) {
      for (int k = 0; k < c; ++k) {
        double acc = 0, wsum = 0;
        for (auto [sy, wy] : fy[oy])
          for (auto [sx, wx] : fx[ox]) {
            acc += wx * wy * img.at(sx, sy, k);
            wsum += wx * wy;
          }
        out.at(ox, oy, k) = saturate_u8(acc / wsum);
      }
    }
  }
  return out;
}

/// Hexcone RGB -> HSV with every channel on [0,255]:
/// H = round(H_deg / 360 * 255), S = round(255 * (max-min) / max), V = max.
/// Achromatic pixels get H = 0.
inline Image rgb_to_hsv(const Image& img) {
  require_color_space(img, ColorSpace::Rgb, "rgb_to_hsv");
  Image out(img.width(), img.height(), ColorSpace::Hsv);
  const auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const int r = src[3 * i], g = src[3 * i + 1], b = src[3 * i + 2];
    const int mx = std::max({r, g, b}), mn = std::min({r, g, b});
    const int delta = mx - mn;
    int h = 0, s = 0;
    if (mx > 0) s = static_cast<int>(detail::div_round(255LL * delta, mx));
    if (delta > 0) {
      // H_deg = 60 * (num / delta + sector); scaled: 255 * (num + sector*delta) / (6*delta).
      std::int64_t num;
      if (mx == r) {
        num = g - b;
        if (num < 0) num += 6LL * delta;
      } else if (mx == g) {
        num = (b - r) + 2LL * delta;
      } else {
        num = (r - g) + 4LL * delta;
      }
      h = static_cast<int>(detail::div_round(255 * num, 6LL * delta));
    }
    dst[3 * i] = static_cast<std::uint8_t>(h);
    dst[3 * i + 1] = static_cast<std::uint8_t>(s);
    dst[3 * i + 2] = static_cast<std::uint8_t>(mx);
  }
  return out;
}

/// Inverse of rgb_to_hsv up to quantization; used by the renderer.
inline std::array<std::uint8_t, 3> hsv_to_rgb(double h255, double s255, double v255) {
  const double h = std::clamp(h255, 0.0, 255.0) / 255.0 * 6.0;
  const double s = std::clamp(s255, 0.0, 255.0) / 255.0;
  const double v = std::clamp(v255, 0.0, 255.0);
  const int sector = static_cast<int>(h) % 6;
  const double f = h - static_cast<int>(h);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  double r, g, b;
  switch (sector) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
  return {saturate_u8(r), saturate_u8(g), saturate_u8(b)};
}

}  // namespace ftirpad
