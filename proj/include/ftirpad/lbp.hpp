#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "ftirpad/error.hpp"
#include "ftirpad/image.hpp"
#include "ftirpad/imgproc.hpp"

namespace ftirpad {

struct LbpScale {
  int neighbors = 8;   // P
  double radius = 1;   // R, pixels

  int bins() const { return neighbors + 2; }
};

struct LbpConfig {
  std::vector<LbpScale> scales{{8, 1.0}, {16, 2.0}, {24, 3.0}};

  void validate() const {
    if (scales.empty()) throw ConfigError("LbpConfig: at least one scale required");
    for (const auto& s : scales) {
      if (s.neighbors < 4 || s.neighbors > 32) throw ConfigError("LbpConfig: P must lie in [4, 32]");
      if (!(s.radius >= 1.0)) throw ConfigError("LbpConfig: R must be >= 1");
    }
  }

  /// Length of one single-channel descriptor: sum of (P + 2).
  int block_dim() const {
    int d = 0;
    for (const auto& s : scales) d += s.bins();
    return d;
  }
};

enum class DescriptorKind : std::uint32_t { Lbp = 1, Clbp = 2, Fused = 3 };

inline std::string_view to_string(DescriptorKind k) {
  switch (k) {
    case DescriptorKind::Lbp: return "LBP";
    case DescriptorKind::Clbp: return "CLBP";
    case DescriptorKind::Fused: return "FUSED";
  }
  return "?";
}

inline DescriptorKind descriptor_kind_from_string(std::string_view s) {
  if (s == "LBP" || s == "lbp") return DescriptorKind::Lbp;
  if (s == "CLBP" || s == "clbp") return DescriptorKind::Clbp;
  if (s == "FUSED" || s == "fused") return DescriptorKind::Fused;
  throw ConfigError("unknown descriptor kind: " + std::string(s));
}

struct FeatureVector {
  std::vector<double> values;
  DescriptorKind kind = DescriptorKind::Lbp;
  bool has_empty_histogram = false;

  std::size_t dim() const { return values.size(); }
};

/// Number of circular 0/1 transitions in the low P bits of `code`.
inline int circular_transitions(std::uint32_t code, int p) {
  const std::uint32_t mask = p == 32 ? 0xFFFFFFFFu : ((1u << p) - 1u);
  code &= mask;
  const std::uint32_t rotated = ((code >> 1) | (code << (p - 1))) & mask;
  return std::popcount(code ^ rotated);
}

/// Rotation-invariant uniform label: bit count for patterns with at most two
/// transitions, P + 1 otherwise.
inline int riu2_label(std::uint32_t code, int p) {
  return circular_transitions(code, p) <= 2 ? std::popcount(code) : p + 1;
}

struct Histogram {
  std::vector<double> bins;
  bool empty = false;
};

namespace detail {

struct NeighborTap {
  int ix, iy;     // integer offset of the top-left interpolation corner
  double fx, fy;  // fractional position inside that cell
};

inline std::vector<NeighborTap> circle_taps(int p, double r) {
  std::vector<NeighborTap> taps;
  taps.reserve(static_cast<std::size_t>(p));
  for (int k = 0; k < p; ++k) {
    const double angle = 2.0 * std::numbers::pi * k / p;
    double dx = r * std::cos(angle), dy = -r * std::sin(angle);
    // Snap values that differ from an integer only by trig round-off.
    if (std::abs(dx - std::round(dx)) < 1e-9) dx = std::round(dx);
    if (std::abs(dy - std::round(dy)) < 1e-9) dy = std::round(dy);
    const double flx = std::floor(dx), fly = std::floor(dy);
    taps.push_back({static_cast<int>(flx), static_cast<int>(fly), dx - flx, dy - fly});
  }
  return taps;
}

}  // namespace detail

/// Normalized riu2 histogram (P + 2 bins) of patterns whose center pixels come
/// from `center_ch` and whose circular neighbors are bilinearly sampled from
/// `neighbor_ch`.  A neighbor >= center sets its bit.  Only pixels at least R
/// from every border contribute.
inline Histogram lbp_hist(const Image& center_ch, const Image& neighbor_ch, int p, double r) {
  if (center_ch.channels() != 1 || neighbor_ch.channels() != 1) throw DataError("lbp_hist: single-channel inputs required");
  if (center_ch.width() != neighbor_ch.width() || center_ch.height() != neighbor_ch.height())
    throw DataError("lbp_hist: channel dimensions differ");
  if (p < 4 || p > 32 || !(r >= 1.0)) throw ConfigError("lbp_hist: invalid (P, R)");
  const int w = center_ch.width(), h = center_ch.height();
  if (!(w > 2 * r) || !(h > 2 * r)) throw DataError("lbp_hist: image too small for radius " + std::to_string(r));

  const auto taps = detail::circle_taps(p, r);
  const int border = static_cast<int>(std::ceil(r));
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(p) + 2, 0);
  const auto nb = neighbor_ch.data();
  const auto ct = center_ch.data();
  const auto stride = static_cast<std::size_t>(w);
  std::uint64_t total = 0;
  for (int y = border; y < h - border; ++y) {
    for (int x = border; x < w - border; ++x) {
      const double c = ct[y * stride + x];
      std::uint32_t code = 0;
      for (int k = 0; k < p; ++k) {
        const auto& t = taps[k];
        const std::size_t base = (y + t.iy) * stride + (x + t.ix);
        double v;
        if (t.fx == 0.0 && t.fy == 0.0) {
          v = nb[base];
        } else {
          const double v00 = nb[base], v10 = t.fx != 0.0 ? nb[base + 1] : v00;
          const double v01 = t.fy != 0.0 ? nb[base + stride] : v00;
          const double v11 = (t.fx != 0.0 && t.fy != 0.0) ? nb[base + stride + 1] : (t.fx != 0.0 ? v10 : v01);
          const double top = v00 + t.fx * (v10 - v00);
          const double bottom = v01 + t.fx * (v11 - v01);
          v = top + t.fy * (bottom - top);
        }
        if (v >= c) code |= 1u << k;
      }
      ++counts[static_cast<std::size_t>(riu2_label(code, p))];
      ++total;
    }
  }
  Histogram hist;
  hist.bins.assign(counts.size(), 0.0);
  if (total == 0) {
    hist.empty = true;
    return hist;
  }
  for (std::size_t b = 0; b < counts.size(); ++b) hist.bins[b] = static_cast<double>(counts[b]) / static_cast<double>(total);
  return hist;
}

namespace detail {

inline void append(FeatureVector& fv, const Histogram& h) {
  fv.values.insert(fv.values.end(), h.bins.begin(), h.bins.end());
  fv.has_empty_histogram = fv.has_empty_histogram || h.empty;
}

}  // namespace detail

/// Multi-scale grayscale LBP: lbp_hist(img, img, P, R) for each scale,
/// concatenated in config order (54 values for the default config).
inline FeatureVector lbp_descriptor(const Image& gray, const LbpConfig& cfg = {}) {
  cfg.validate();
  if (gray.channels() != 1) throw DataError("lbp_descriptor: grayscale input required");
  FeatureVector fv;
  fv.kind = DescriptorKind::Lbp;
  fv.values.reserve(static_cast<std::size_t>(cfg.block_dim()));
  for (const auto& s : cfg.scales) detail::append(fv, lbp_hist(gray, gray, s.neighbors, s.radius));
  return fv;
}

/// Color LBP over every ordered channel pair: outer loop over the center
/// channel i, inner loop over the neighbor channel j, three scales each
/// (K^2 * 54 = 486 values for K = 3 and the default config).
inline FeatureVector clbp_descriptor(const Image& img, const LbpConfig& cfg = {}) {
  cfg.validate();
  if (img.channels() != 3) throw DataError("clbp_descriptor: three-channel input required");
  std::vector<Image> channels;
  for (int k = 0; k < 3; ++k) channels.push_back(img.channel(k));
  FeatureVector fv;
  fv.kind = DescriptorKind::Clbp;
  fv.values.reserve(9 * static_cast<std::size_t>(cfg.block_dim()));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (const auto& s : cfg.scales) detail::append(fv, lbp_hist(channels[i], channels[j], s.neighbors, s.radius));
  return fv;
}

enum class View { Ftir, Direct };

inline std::string_view to_string(View v) { return v == View::Ftir ? "ftir" : "direct"; }

inline View view_from_string(std::string_view s) {
  if (s == "ftir") return View::Ftir;
  if (s == "direct") return View::Direct;
  throw ConfigError("unknown view: " + std::string(s));
}

/// Descriptor input sizes (width x height): both views keep 145 columns.
inline constexpr Dims kFtirDescriptorDims{145, 108};
inline constexpr Dims kDirectDescriptorDims{145, 96};

inline Dims descriptor_dims(View v) { return v == View::Ftir ? kFtirDescriptorDims : kDirectDescriptorDims; }

/// Raw RGB view -> HSV image at the descriptor size.
inline Image preprocess_for_clbp(const Image& rgb, View view) {
  const Dims d = descriptor_dims(view);
  return rgb_to_hsv(downsample_box(rgb, d.width, d.height));
}

/// Raw RGB view -> grayscale at the descriptor size.
inline Image preprocess_for_lbp(const Image& rgb, View view) {
  const Dims d = descriptor_dims(view);
  return to_grayscale(downsample_box(rgb, d.width, d.height));
}

/// Feature-level fusion by concatenation in argument order.
inline FeatureVector fuse_features(const FeatureVector& a, const FeatureVector& b) {
  if (b.values.empty()) return a;
  if (a.values.empty()) return b;
  for (const auto* v : {&a, &b})
    for (double x : v->values)
      if (!std::isfinite(x)) throw DataError("fuse_features: non-finite value");
  FeatureVector out;
  out.kind = DescriptorKind::Fused;
  out.values = a.values;
  out.values.insert(out.values.end(), b.values.begin(), b.values.end());
  out.has_empty_histogram = a.has_empty_histogram || b.has_empty_histogram;
  return out;
}

}  // namespace ftirpad
