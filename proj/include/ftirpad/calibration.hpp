#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ftirpad/error.hpp"
#include "ftirpad/image.hpp"

namespace ftirpad {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Eight-parameter planar perspective map
///   x' = (a x + b y + c) / l,  y' = (d x + e y + f) / l,  l = g x + h y + 1.
class PerspectiveTransform {
public:
  using Params = std::array<double, 8>;

  PerspectiveTransform() : p_{1, 0, 0, 0, 1, 0, 0, 0} {}
  explicit PerspectiveTransform(const Params& p) : p_(p) { check_invertible(); }

  static PerspectiveTransform identity() { return {}; }
  static PerspectiveTransform translation(double tx, double ty) { return PerspectiveTransform({1, 0, tx, 0, 1, ty, 0, 0}); }
  static PerspectiveTransform scaling(double sx, double sy) { return PerspectiveTransform({sx, 0, 0, 0, sy, 0, 0, 0}); }

  /// From a 3x3 homography; rescaled so the bottom-right entry is 1.
  static PerspectiveTransform from_matrix(const Eigen::Matrix3d& m) {
    if (std::abs(m(2, 2)) < 1e-300) throw DataError("homography has zero bottom-right entry; not representable");
    const Eigen::Matrix3d n = m / m(2, 2);
    return PerspectiveTransform({n(0, 0), n(0, 1), n(0, 2), n(1, 0), n(1, 1), n(1, 2), n(2, 0), n(2, 1)});
  }

  const Params& params() const { return p_; }

  Eigen::Matrix3d matrix() const {
    Eigen::Matrix3d m;
    m << p_[0], p_[1], p_[2], p_[3], p_[4], p_[5], p_[6], p_[7], 1.0;
    return m;
  }

  /// The scale parameter l = g x + h y + 1 at a source point.
  double scale_at(double x, double y) const { return p_[6] * x + p_[7] * y + 1.0; }

  Point2 map(Point2 s) const {
    const double l = scale_at(s.x, s.y);
    return {(p_[0] * s.x + p_[1] * s.y + p_[2]) / l, (p_[3] * s.x + p_[4] * s.y + p_[5]) / l};
  }

  PerspectiveTransform inverse() const { return from_matrix(matrix().inverse()); }

  PerspectiveTransform then(const PerspectiveTransform& next) const {
    return from_matrix(next.matrix() * matrix());
  }

  /// Determinant of the matrix after scaling each row to unit length.
  double normalized_determinant() const {
    Eigen::Matrix3d m = matrix();
    for (int r = 0; r < 3; ++r) {
      const double n = m.row(r).norm();
      if (n == 0.0) return 0.0;
      m.row(r) /= n;
    }
    return m.determinant();
  }

  bool invertible() const { return std::abs(normalized_determinant()) > 1e-12; }

private:
  void check_invertible() const {
    for (double v : p_)
      if (!std::isfinite(v)) throw DataError("perspective parameters must be finite");
    if (!invertible()) throw DataError("perspective transform is not invertible");
  }

  Params p_;
};

struct Correspondence {
  Point2 src;
  Point2 dst;
};
using Correspondences = std::vector<Correspondence>;

struct ResidualReport {
  double max_px = 0.0;
  double rms_px = 0.0;
};

inline ResidualReport reprojection_residual(const PerspectiveTransform& t, const Correspondences& pairs) {
  ResidualReport r;
  double sq = 0.0;
  for (const auto& c : pairs) {
    const Point2 m = t.map(c.src);
    const double e = std::hypot(m.x - c.dst.x, m.y - c.dst.y);
    r.max_px = std::max(r.max_px, e);
    sq += e * e;
  }
  if (!pairs.empty()) r.rms_px = std::sqrt(sq / static_cast<double>(pairs.size()));
  return r;
}

struct PerspectiveEstimate {
  PerspectiveTransform transform;
  ResidualReport residual;
};

namespace detail {

/// Similarity taking the points to centroid 0 and RMS distance sqrt(2).
inline Eigen::Matrix3d hartley_normalizer(const std::vector<Point2>& pts) {
  double cx = 0, cy = 0;
  for (auto p : pts) cx += p.x, cy += p.y;
  cx /= static_cast<double>(pts.size());
  cy /= static_cast<double>(pts.size());
  double ms = 0;
  for (auto p : pts) ms += (p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy);
  const double rms = std::sqrt(ms / static_cast<double>(pts.size()));
  if (!(rms > 0)) throw DataError("all correspondence points coincide");
  const double s = std::sqrt(2.0) / rms;
  Eigen::Matrix3d t;
  t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
  return t;
}

inline bool collinear(Point2 a, Point2 b, Point2 c, double scale) {
  const double cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
  return std::abs(cross) <= 1e-9 * scale * scale;
}

inline std::string describe_degeneracy(const Correspondences& pairs) {
  std::ostringstream os;
  double scale = 1.0;
  for (const auto& c : pairs) scale = std::max({scale, std::abs(c.src.x), std::abs(c.src.y), std::abs(c.dst.x), std::abs(c.dst.y)});
  const std::size_t n = std::min<std::size_t>(pairs.size(), 64);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      for (std::size_t k = j + 1; k < n; ++k) {
        for (int side = 0; side < 2; ++side) {
          auto pt = [&](std::size_t idx) { return side == 0 ? pairs[idx].src : pairs[idx].dst; };
          if (collinear(pt(i), pt(j), pt(k), scale)) {
            os << (side == 0 ? "source" : "destination") << " points " << i << ", " << j << ", " << k
               << " are collinear: (" << pt(i).x << "," << pt(i).y << ") (" << pt(j).x << "," << pt(j).y << ") ("
               << pt(k).x << "," << pt(k).y << ")";
            return os.str();
          }
        }
      }
  return "correspondences do not constrain all eight parameters";
}

}  // namespace detail

/// Least-squares fit of the eight parameters.  Each pair contributes
///   a x + b y + c - g x x' - h y x' = x'
///   d x + e y + f - g x y' - h y y' = y'
/// solved in Hartley-normalized coordinates, then mapped back.
inline PerspectiveEstimate estimate_perspective(const Correspondences& pairs) {
  if (pairs.size() < 4)
    throw DataError("estimate_perspective: need at least 4 correspondences, got " + std::to_string(pairs.size()));
  std::vector<Point2> src, dst;
  src.reserve(pairs.size());
  dst.reserve(pairs.size());
  for (const auto& c : pairs) {
    if (!std::isfinite(c.src.x) || !std::isfinite(c.src.y) || !std::isfinite(c.dst.x) || !std::isfinite(c.dst.y))
      throw DataError("estimate_perspective: non-finite coordinate");
    src.push_back(c.src);
    dst.push_back(c.dst);
  }
  const Eigen::Matrix3d ts = detail::hartley_normalizer(src);
  const Eigen::Matrix3d td = detail::hartley_normalizer(dst);

  const auto n = static_cast<Eigen::Index>(pairs.size());
  Eigen::MatrixXd a(2 * n, 8);
  Eigen::VectorXd rhs(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d s = ts * Eigen::Vector3d(src[i].x, src[i].y, 1.0);
    const Eigen::Vector3d d = td * Eigen::Vector3d(dst[i].x, dst[i].y, 1.0);
    const double x = s.x(), y = s.y(), xp = d.x(), yp = d.y();
    a.row(2 * i) << x, y, 1, 0, 0, 0, -x * xp, -y * xp;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -x * yp, -y * yp;
    rhs(2 * i) = xp;
    rhs(2 * i + 1) = yp;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv(7) <= 1e-10 * sv(0)) throw DataError("estimate_perspective: degenerate configuration (rank < 8): " + detail::describe_degeneracy(pairs));
  const Eigen::VectorXd h = svd.solve(rhs);

  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  const Eigen::Matrix3d full = td.inverse() * hn * ts;
  PerspectiveEstimate est{PerspectiveTransform::from_matrix(full), {}};
  est.residual = reprojection_residual(est.transform, pairs);
  return est;
}

namespace detail {

/// Bilinear sample written as nested lerps, so equal corners reproduce
/// their value exactly.  Returns nullopt outside [0,w-1] x [0,h-1].
inline std::optional<double> bilinear(const Image& img, double x, double y, int c) {
  constexpr double eps = 1e-9;
  const double maxx = img.width() - 1, maxy = img.height() - 1;
  if (x < -eps || y < -eps || x > maxx + eps || y > maxy + eps) return std::nullopt;
  x = std::clamp(x, 0.0, maxx);
  y = std::clamp(y, 0.0, maxy);
  const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, img.width() - 1), y1 = std::min(y0 + 1, img.height() - 1);
  const double fx = x - x0, fy = y - y0;
  const double v00 = img.at(x0, y0, c), v10 = img.at(x1, y0, c);
  const double v01 = img.at(x0, y1, c), v11 = img.at(x1, y1, c);
  const double top = v00 + fx * (v10 - v00);
  const double bottom = v01 + fx * (v11 - v01);
  return top + fy * (bottom - top);
}

}  // namespace detail

/// Warps img so that output pixel (x', y') takes the bilinear sample of the
/// input at t^-1(x', y').  Samples falling outside the input are white.
inline Image apply_perspective(const PerspectiveTransform& t, const Image& img, int out_w, int out_h) {
  if (!t.invertible()) throw DataError("apply_perspective: transform is not invertible");
  if (out_w <= 0 || out_h <= 0) throw DataError("apply_perspective: output dimensions must be positive");
  const PerspectiveTransform inv = t.inverse();
  Image out(out_w, out_h, img.color_space(), std::uint8_t{255});
  const int c = img.channels();
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const Point2 s = inv.map({static_cast<double>(x), static_cast<double>(y)});
      for (int k = 0; k < c; ++k) {
        if (auto v = detail::bilinear(img, s.x, s.y, k)) out.at(x, y, k) = saturate_u8(*v);
      }
    }
  }
  return out;
}

struct CellResolution {
  int col = 0;
  int row = 0;
  Point2 center_px;  // cell center in the observed (source) image
  double ppi_x = 0.0;
  double ppi_y = 0.0;
};

struct ResolutionMap {
  int cols = 0;  // cells per row
  int rows = 0;
  std::vector<CellResolution> cells;
  double min_ppi_x = 0, max_ppi_x = 0, min_ppi_y = 0, max_ppi_y = 0;

  double mean_ppi_x() const {
    double s = 0;
    for (const auto& c : cells) s += c.ppi_x;
    return s / static_cast<double>(cells.size());
  }
  double mean_ppi_y() const {
    double s = 0;
    for (const auto& c : cells) s += c.ppi_y;
    return s / static_cast<double>(cells.size());
  }
};

namespace detail {

/// Sorted distinct values, merging entries closer than tol.
inline std::vector<double> distinct_levels(std::vector<double> v, double tol) {
  std::sort(v.begin(), v.end());
  std::vector<double> out;
  for (double x : v)
    if (out.empty() || x - out.back() > tol) out.push_back(x);
  return out;
}

inline int level_index(const std::vector<double>& levels, double v, double tol) {
  auto it = std::lower_bound(levels.begin(), levels.end(), v - tol);
  if (it == levels.end() || std::abs(*it - v) > tol) return -1;
  return static_cast<int>(it - levels.begin());
}

}  // namespace detail

/// Native resolution per checkerboard cell.  The destination coordinates
/// must form a complete, evenly spaced rectangular lattice of corners; the
/// source coordinates are where those corners appear in the observed image.
inline ResolutionMap estimate_resolution(const Correspondences& pairs, double square_size_mm) {
  if (!(square_size_mm > 0)) throw ConfigError("estimate_resolution: square size must be positive");
  if (pairs.size() < 4) throw DataError("estimate_resolution: need at least a 2x2 corner grid");
  double extent = 0;
  std::vector<double> xs, ys;
  for (const auto& c : pairs) {
    xs.push_back(c.dst.x);
    ys.push_back(c.dst.y);
    extent = std::max({extent, std::abs(c.dst.x), std::abs(c.dst.y)});
  }
  const double tol = 1e-6 * std::max(extent, 1.0);
  const auto lx = detail::distinct_levels(xs, tol);
  const auto ly = detail::distinct_levels(ys, tol);
  const auto nx = static_cast<int>(lx.size()), ny = static_cast<int>(ly.size());
  if (nx < 2 || ny < 2 || static_cast<std::size_t>(nx) * ny != pairs.size())
    throw DataError("estimate_resolution: correspondences do not form a complete rectangular grid");
  auto uniform = [&](const std::vector<double>& l) {
    const double step = l[1] - l[0];
    for (std::size_t i = 1; i < l.size(); ++i)
      if (std::abs((l[i] - l[i - 1]) - step) > 1e-6 * std::abs(step) + tol) return false;
    return true;
  };
  if (!uniform(lx) || !uniform(ly)) throw DataError("estimate_resolution: grid spacing is not uniform");

  std::vector<const Correspondence*> grid(static_cast<std::size_t>(nx) * ny, nullptr);
  for (const auto& c : pairs) {
    const int ix = detail::level_index(lx, c.dst.x, tol), iy = detail::level_index(ly, c.dst.y, tol);
    if (ix < 0 || iy < 0) throw DataError("estimate_resolution: off-grid corner");
    auto& slot = grid[static_cast<std::size_t>(iy) * nx + ix];
    if (slot) throw DataError("estimate_resolution: duplicate corner");
    slot = &c;
  }
  auto at = [&](int ix, int iy) { return grid[static_cast<std::size_t>(iy) * nx + ix]->src; };
  auto dist = [](Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); };

  ResolutionMap map;
  map.cols = nx - 1;
  map.rows = ny - 1;
  map.min_ppi_x = map.min_ppi_y = std::numeric_limits<double>::infinity();
  map.max_ppi_x = map.max_ppi_y = 0;
  for (int iy = 0; iy + 1 < ny; ++iy) {
    for (int ix = 0; ix + 1 < nx; ++ix) {
      const Point2 p00 = at(ix, iy), p10 = at(ix + 1, iy), p01 = at(ix, iy + 1), p11 = at(ix + 1, iy + 1);
      CellResolution cell;
      cell.col = ix;
      cell.row = iy;
      cell.center_px = {(p00.x + p10.x + p01.x + p11.x) / 4, (p00.y + p10.y + p01.y + p11.y) / 4};
      cell.ppi_x = 25.4 * 0.5 * (dist(p00, p10) + dist(p01, p11)) / square_size_mm;
      cell.ppi_y = 25.4 * 0.5 * (dist(p00, p01) + dist(p10, p11)) / square_size_mm;
      if (!(cell.ppi_x > 0) || !(cell.ppi_y > 0)) throw DataError("estimate_resolution: collapsed grid cell");
      map.min_ppi_x = std::min(map.min_ppi_x, cell.ppi_x);
      map.max_ppi_x = std::max(map.max_ppi_x, cell.ppi_x);
      map.min_ppi_y = std::min(map.min_ppi_y, cell.ppi_y);
      map.max_ppi_y = std::max(map.max_ppi_y, cell.ppi_y);
      map.cells.push_back(cell);
    }
  }
  return map;
}

struct CheckerboardRender {
  Image image;                      // GRAY, board warped by the transform
  std::vector<Point2> ideal;        // (cols+1)*(rows+1) lattice corners, row-major
  std::vector<Point2> corners;      // the same corners after the transform
  int rows = 0, cols = 0, square_px = 0;

  Correspondences observed_to_ideal() const {
    Correspondences c;
    for (std::size_t i = 0; i < ideal.size(); ++i) c.push_back({corners[i], ideal[i]});
    return c;
  }
};

/// Renders a rows x cols board with square_px squares (top-left square dark)
/// and warps it by `t`.  Pixel centers sit at integer coordinates; each pixel
/// is 4x4 supersampled.  Canvas defaults to the warped board's bounding box.
inline CheckerboardRender synth_checkerboard(int rows, int cols, int square_px, const PerspectiveTransform& t,
                                             std::optional<std::pair<int, int>> canvas = std::nullopt) {
  if (rows < 3 || cols < 3) throw ConfigError("synth_checkerboard: rows and cols must be >= 3");
  if (square_px < 1) throw ConfigError("synth_checkerboard: square_px must be >= 1");
  CheckerboardRender r;
  r.rows = rows;
  r.cols = cols;
  r.square_px = square_px;
  double max_x = 0, max_y = 0;
  for (int j = 0; j <= rows; ++j) {
    for (int i = 0; i <= cols; ++i) {
      const Point2 ideal{static_cast<double>(i * square_px), static_cast<double>(j * square_px)};
      const Point2 warped = t.map(ideal);
      r.ideal.push_back(ideal);
      r.corners.push_back(warped);
      max_x = std::max(max_x, warped.x);
      max_y = std::max(max_y, warped.y);
    }
  }
  const int w = canvas ? canvas->first : static_cast<int>(std::ceil(max_x)) + 1;
  const int h = canvas ? canvas->second : static_cast<int>(std::ceil(max_y)) + 1;
  r.image = Image(w, h, ColorSpace::Gray, std::uint8_t{255});
  const PerspectiveTransform inv = t.inverse();
  const double bw = static_cast<double>(cols) * square_px, bh = static_cast<double>(rows) * square_px;
  constexpr int ss = 4;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int dark = 0;
      for (int sy = 0; sy < ss; ++sy) {
        for (int sx = 0; sx < ss; ++sx) {
          const Point2 b = inv.map({x - 0.5 + (sx + 0.5) / ss, y - 0.5 + (sy + 0.5) / ss});
          if (b.x < 0 || b.y < 0 || b.x >= bw || b.y >= bh) continue;
          const auto ci = static_cast<int>(std::floor(b.x / square_px));
          const auto cj = static_cast<int>(std::floor(b.y / square_px));
          if ((ci + cj) % 2 == 0) ++dark;
        }
      }
      r.image.at(x, y) = static_cast<std::uint8_t>(255 - (255 * dark + ss * ss / 2) / (ss * ss));
    }
  }
  return r;
}

}  // namespace ftirpad
