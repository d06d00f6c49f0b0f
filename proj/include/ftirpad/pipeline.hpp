#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "ftirpad/calibration.hpp"
#include "ftirpad/error.hpp"
#include "ftirpad/image.hpp"
#include "ftirpad/imgproc.hpp"

namespace ftirpad {

inline constexpr double kMatcherPpi = 500.0;

struct NativePpi {
  double x = 0.0;
  double y = 0.0;
};

enum class ResampleMode {
  Global,  // one (ppi_x, ppi_y) pair for the whole frame
  PerCell  // per-axis ppi profile interpolated from a ResolutionMap
};

struct ProcessOptions {
  ResampleMode mode = ResampleMode::Global;
  const ResolutionMap* resolution = nullptr;  // required for PerCell
};

namespace detail {

/// Source-pixel boundaries of 500 ppi output pixels along one axis, given
/// ppi samples (position, ppi) in source pixel coordinates.
inline std::vector<double> ppi_profile_bounds(std::vector<std::pair<double, double>> samples, int extent) {
  std::sort(samples.begin(), samples.end());
  auto ppi_at = [&](double u) {
    if (u <= samples.front().first) return samples.front().second;
    if (u >= samples.back().first) return samples.back().second;
    auto hi = std::upper_bound(samples.begin(), samples.end(), std::make_pair(u, -1.0));
    auto lo = hi - 1;
    const double f = (u - lo->first) / (hi->first - lo->first);
    return lo->second + f * (hi->second - lo->second);
  };
  // inches[u] = physical position of source pixel boundary u.
  std::vector<double> inches(static_cast<std::size_t>(extent) + 1, 0.0);
  for (int u = 0; u < extent; ++u) inches[u + 1] = inches[u] + 1.0 / ppi_at(u + 0.5);
  const auto n = static_cast<int>(std::floor(inches.back() * kMatcherPpi));
  if (n < 1) throw DataError("per-cell resampling yields an empty image");
  std::vector<double> bounds(static_cast<std::size_t>(n) + 1);
  std::size_t u = 0;
  for (int k = 0; k <= n; ++k) {
    const double target = k / kMatcherPpi;
    while (u + 1 < inches.size() - 1 && inches[u + 1] < target) ++u;
    const double span = inches[u + 1] - inches[u];
    bounds[k] = std::min(static_cast<double>(extent), u + std::clamp((target - inches[u]) / span, 0.0, 1.0));
  }
  return bounds;
}

}  // namespace detail

/// Output size of the 500 ppi resampling step.
inline std::pair<int, int> matcher_dims(int width, int height, NativePpi ppi) {
  return {static_cast<int>(std::lround(width * kMatcherPpi / ppi.x)),
          static_cast<int>(std::lround(height * kMatcherPpi / ppi.y))};
}

/// Raw FTIR frame -> match-ready 500 ppi grayscale print:
/// grayscale, equalize, negate (ridges dark), frontalize, area-downsample.
inline Image process_ftir(const Image& raw, const PerspectiveTransform& t, NativePpi ppi,
                          const ProcessOptions& opts = {}) {
  require_color_space(raw, ColorSpace::Rgb, "process_ftir");
  if (!(ppi.x > 0) || !(ppi.y > 0)) throw ConfigError("process_ftir: native ppi must be positive");
  const Image gray = negate(hist_equalize(to_grayscale(raw)));
  const Image frontal = apply_perspective(t, gray, raw.width(), raw.height());
  Image out;
  if (opts.mode == ResampleMode::Global) {
    const auto [w, h] = matcher_dims(raw.width(), raw.height(), ppi);
    out = downsample_box(frontal, w, h);
  } else {
    if (!opts.resolution || opts.resolution->cells.empty())
      throw ConfigError("process_ftir: per-cell resampling needs a resolution map");
    // Average each cell column (row) into one profile sample.
    const ResolutionMap& rm = *opts.resolution;
    std::vector<std::pair<double, double>> xs(static_cast<std::size_t>(rm.cols)), ys(static_cast<std::size_t>(rm.rows));
    for (const auto& cell : rm.cells) {
      const Point2 c = t.map(cell.center_px);
      xs[cell.col].first += c.x / rm.rows;
      xs[cell.col].second += cell.ppi_x / rm.rows;
      ys[cell.row].first += c.y / rm.cols;
      ys[cell.row].second += cell.ppi_y / rm.cols;
    }
    out = resample_area(frontal, detail::ppi_profile_bounds(xs, frontal.width()),
                        detail::ppi_profile_bounds(ys, frontal.height()));
  }
  out.ppi_x = kMatcherPpi;
  out.ppi_y = kMatcherPpi;
  return out;
}

}  // namespace ftirpad
