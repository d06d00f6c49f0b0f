#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "ftirpad/calibration.hpp"
#include "ftirpad/error.hpp"
#include "ftirpad/image.hpp"
#include "ftirpad/imgproc.hpp"
#include "ftirpad/rng.hpp"

namespace ftirpad {

/// Identity of a finger (live, or the pattern cast into a spoof) plus the
/// skin color of whoever presents it.
struct FingerSpec {
  std::string subject_id;
  std::string finger_id;
  double ridge_frequency = 64.0;   // ridge cycles across the nominal field width
  std::uint64_t pattern_seed = 0;  // orientation/phase field seed
  double skin_hue = 14.0;          // [0,255] hue scale
  double skin_saturation = 110.0;  // [0,255]
};

struct MaterialSpec {
  std::string name;
  double hue_shift = 0.0;           // added to the presenter's skin hue, wraps on [0,256)
  double saturation_scale = 1.0;
  double texture_noise_sigma = 4.0; // gray levels
  double transparency = 0.0;        // 1 = skin color shows through completely
  double albedo = 1.0;              // 0 = absorbs all FTIR light

  void validate() const {
    if (name.empty()) throw ConfigError("material needs a name");
    if (!(transparency >= 0 && transparency <= 1)) throw ConfigError("material transparency must lie in [0,1]");
    if (!(albedo >= 0 && albedo <= 1)) throw ConfigError("material albedo must lie in [0,1]");
    if (!(saturation_scale >= 0)) throw ConfigError("material saturation_scale must be >= 0");
    if (!(texture_noise_sigma >= 0)) throw ConfigError("material texture_noise_sigma must be >= 0");
  }
};

/// The seven spoof materials, in the order of the collected-data summary.
inline const std::vector<std::string>& spoof_material_names() {
  static const std::vector<std::string> names{"Ecoflex",  "Wood Glue",             "Monster Liquid Latex",
                                              "Liquid Latex Body Paint", "Gelatin", "Silver Coated Ecoflex",
                                              "Crayola Model Magic"};
  return names;
}

/// Order in which cross-material results are tabulated.
inline const std::vector<std::string>& cross_material_report_order() {
  static const std::vector<std::string> names{"Crayola Model Magic",     "Ecoflex",  "Silver Coated Ecoflex",
                                              "Gelatin", "Liquid Latex Body Paint", "Monster Liquid Latex",
                                              "Wood Glue"};
  return names;
}

/// Spoof count per material in the full-size collection (10 impressions each).
inline int full_spoof_count(const std::string& material) { return material == "Crayola Model Magic" ? 6 : 10; }

/// Black conductive-coated silicone: absorbs FTIR illumination entirely.
inline const std::string kAbsorptiveMaterial = "Conductive Black Ecoflex";

/// Appearance presets.  Every preset's hue offset is at least 30 units from
/// live skin.  The parameters are conventional, not measured.
inline MaterialSpec material_preset(const std::string& name) {
  if (name == "Ecoflex") return {name, 34, 0.55, 1.2, 0.45, 0.92};
  if (name == "Wood Glue") return {name, 40, 0.35, 7.0, 0.25, 0.95};
  if (name == "Monster Liquid Latex") return {name, 60, 1.35, 3.0, 0.0, 0.80};
  if (name == "Liquid Latex Body Paint") return {name, -40, 1.25, 5.5, 0.0, 0.85};
  if (name == "Gelatin") return {name, 32, 0.75, 1.8, 0.35, 0.88};
  if (name == "Silver Coated Ecoflex") return {name, 120, 0.15, 8.5, 0.0, 0.70};
  if (name == "Crayola Model Magic") return {name, 150, 1.40, 9.5, 0.0, 0.60};
  if (name == kAbsorptiveMaterial) return {name, 0, 0.05, 1.0, 0.0, 0.0};
  throw ConfigError("no preset for material '" + name + "'");
}

/// Placement of the finger on the platen.
struct Pose {
  double tx = 0.0;            // fraction of frame width, nominally within +-0.1
  double ty = 0.0;            // fraction of frame height
  double rotation_deg = 0.0;  // nominally within +-30
  double pressure = 0.5;      // [0,1]; widens ridge contact and footprint
};

struct RenderSettings {
  Dims ftir{580, 432};
  Dims direct{580, 384};
  double px_per_mm = 20.0;
  /// Saturation of the surface hue carried into FTIR light (fraction of the
  /// surface saturation).  0 renders an achromatic FTIR view.
  double ftir_tint_saturation = 0.15;
  /// Maps the frontal FTIR frame to what the FTIR camera records (keystone).
  PerspectiveTransform ftir_distortion = PerspectiveTransform::identity();
};

// Appearance constants shared by both views.
inline constexpr double kFieldWidthMm = 29.0;
inline constexpr double kLiveTextureSigma = 4.0;
inline constexpr double kFtirBackground = 4.0;
inline constexpr double kFtirRidgeLevel = 215.0;
inline constexpr double kDirectValue = 200.0;

struct RenderedViews {
  Image ftir;          // RGB
  Image direct;        // RGB
  Image contact_mask;  // GRAY, 255 where a ridge touches the platen (FTIR frame)
};

namespace detail {

/// Smooth seeded field: the ridge phase in finger coordinates (mm).
class RidgeField {
public:
  explicit RidgeField(const FingerSpec& f) {
    Rng rng(substream_seed(f.pattern_seed, "ridge-field"));
    period_mm_ = kFieldWidthMm / std::max(f.ridge_frequency, 1.0);
    for (auto& w : warp_) {
      w.kx = rng.uniform(0.05, 0.25);
      w.ky = rng.uniform(0.05, 0.25);
      w.phase = rng.uniform(0, 2 * std::numbers::pi);
      w.amp = rng.uniform(0.3, 1.1);
    }
    core_x_ = rng.uniform(-2.0, 2.0);
    core_y_ = rng.uniform(-2.0, 2.0);
    aspect_ = rng.uniform(0.7, 1.4);
    whorl_ = rng.uniform();  // blend between arch-like and whorl-like flow
    arch_height_ = rng.uniform(2.0, 5.0);
    arch_width_ = rng.uniform(3.0, 6.0);
  }

  /// Ridge profile in [-1,1] at finger-plane point (mm).
  double ridge(double qx, double qy) const {
    double wx = qx, wy = qy;
    for (std::size_t k = 0; k < warp_.size(); ++k) {
      const auto& w = warp_[k];
      const double s = std::sin(w.kx * qx + w.ky * qy + w.phase);
      if (k % 2 == 0) wx += w.amp * s; else wy += w.amp * s;
    }
    const double dx = wx - core_x_, dy = (wy - core_y_) * aspect_;
    const double whorl = std::sqrt(dx * dx + dy * dy);
    const double arch = wy + arch_height_ * std::exp(-(wx * wx) / (arch_width_ * arch_width_));
    const double psi = whorl_ * whorl + (1 - whorl_) * arch;
    return std::cos(2 * std::numbers::pi * psi / period_mm_);
  }

private:
  struct Wave {
    double kx, ky, phase, amp;
  };
  std::array<Wave, 4> warp_{};
  double period_mm_ = 0.45;
  double core_x_ = 0, core_y_ = 0, aspect_ = 1, whorl_ = 0.5, arch_height_ = 3, arch_width_ = 4;
};

struct Footprint {
  double ax, ay;  // semi-axes in mm
  bool contains(double qx, double qy, double grow = 1.0) const {
    const double u = qx / (ax * grow), v = qy / (ay * grow);
    return u * u + v * v <= 1.0;
  }
};

inline Footprint footprint_for(const Pose& pose) {
  const double scale = 0.95 + 0.1 * std::clamp(pose.pressure, 0.0, 1.0);
  return {9.5 * scale, 7.0 * scale};
}

/// Contact threshold on the ridge profile: more pressure, wider ridges.
inline double contact_threshold(const Pose& pose) { return 0.25 - 0.5 * (std::clamp(pose.pressure, 0.0, 1.0) - 0.5); }

inline double wrap_hue(double h) {
  h = std::fmod(h, 256.0);
  return h < 0 ? h + 256.0 : h;
}

struct Frame {
  int w, h;
  double px_per_mm;
  double cos_r, sin_r, tx_mm, ty_mm;

  /// Pixel -> finger-plane coordinates (mm), undoing the pose.
  Point2 to_finger(double x, double y) const {
    const double px = (x - w / 2.0) / px_per_mm - tx_mm;
    const double py = (y - h / 2.0) / px_per_mm - ty_mm;
    return {cos_r * px + sin_r * py, -sin_r * px + cos_r * py};
  }
};

inline Frame make_frame(Dims d, double px_per_mm, const Pose& pose) {
  const double r = pose.rotation_deg * std::numbers::pi / 180.0;
  return {d.width, d.height, px_per_mm, std::cos(r), std::sin(r),
          pose.tx * d.width / px_per_mm, pose.ty * d.height / px_per_mm};
}

inline std::uint8_t clamp_u8(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

}  // namespace detail

/// Renders the FTIR and direct views of one presentation.  `material` empty
/// means a live finger.  Pure function of its arguments.
inline RenderedViews render_views(const FingerSpec& finger, const std::optional<MaterialSpec>& material,
                                  const Pose& pose, const RenderSettings& settings, std::uint64_t noise_seed) {
  for (Dims d : {settings.ftir, settings.direct})
    if (d.width <= 0 || d.height <= 0) throw DataError("render_views: zero-area dimensions");
  if (!(settings.px_per_mm > 0)) throw ConfigError("render_views: px_per_mm must be positive");
  if (material) material->validate();

  const detail::RidgeField field(finger);
  const detail::Footprint fp = detail::footprint_for(pose);
  const double thr = detail::contact_threshold(pose);
  const double albedo = material ? material->albedo : 1.0;
  const double sigma = material ? material->texture_noise_sigma : kLiveTextureSigma;

  // Surface color as HSV, then RGB, blended with skin by transparency.
  const auto skin_rgb = hsv_to_rgb(finger.skin_hue, finger.skin_saturation, kDirectValue);
  std::array<double, 3> surface{double(skin_rgb[0]), double(skin_rgb[1]), double(skin_rgb[2])};
  double surface_hue = finger.skin_hue, surface_sat = finger.skin_saturation;
  if (material) {
    surface_hue = detail::wrap_hue(finger.skin_hue + material->hue_shift);
    surface_sat = std::clamp(finger.skin_saturation * material->saturation_scale, 0.0, 255.0);
    const auto mat = hsv_to_rgb(surface_hue, surface_sat, kDirectValue);
    for (int k = 0; k < 3; ++k) surface[k] = material->transparency * surface[k] + (1 - material->transparency) * mat[k];
  }
  // FTIR light is mostly the LED's; the surface tints it weakly.
  const auto tint_rgb = hsv_to_rgb(surface_hue, std::clamp(settings.ftir_tint_saturation, 0.0, 1.0) * surface_sat, 255.0);
  const std::array<double, 3> tint{tint_rgb[0] / 255.0, tint_rgb[1] / 255.0, tint_rgb[2] / 255.0};

  RenderedViews out;
  {
    // The frontal FTIR frame is rendered first, then pushed through the
    // camera keystone (identity by default).
    const auto frame = detail::make_frame(settings.ftir, settings.px_per_mm, pose);
    Image frontal(settings.ftir.width, settings.ftir.height, ColorSpace::Rgb);
    Image mask(settings.ftir.width, settings.ftir.height, ColorSpace::Gray);
    Rng noise(substream_seed(noise_seed, "ftir-noise"));
    for (int y = 0; y < frame.h; ++y) {
      for (int x = 0; x < frame.w; ++x) {
        const Point2 q = frame.to_finger(x, y);
        bool contact = false;
        double level = kFtirBackground;
        if (fp.contains(q.x, q.y)) {
          const double s = field.ridge(q.x, q.y);
          if (s > thr) {
            contact = true;
            const double depth = (s - thr) / (1.0 - thr);  // 0 at ridge edge, 1 at crest
            level = albedo * kFtirRidgeLevel * (0.8 + 0.2 * depth);
          }
        }
        mask.at(x, y) = contact ? 255 : 0;
        const int n_common = noise.noise(contact ? sigma : 1.5);
        for (int k = 0; k < 3; ++k) {
          const double v = contact ? level * tint[k] : level;
          frontal.at(x, y, k) = detail::clamp_u8(static_cast<int>(std::nearbyint(v)) + n_common);
        }
      }
    }
    const PerspectiveTransform& warp = settings.ftir_distortion;
    const bool identity = warp.params() == PerspectiveTransform::identity().params();
    if (identity) {
      out.ftir = std::move(frontal);
      out.contact_mask = std::move(mask);
    } else {
      out.ftir = apply_perspective(warp, frontal, frame.w, frame.h);
      out.contact_mask = Image(frame.w, frame.h, ColorSpace::Gray);
      const PerspectiveTransform inv = warp.inverse();
      for (int y = 0; y < frame.h; ++y)
        for (int x = 0; x < frame.w; ++x) {
          const Point2 s = inv.map({double(x), double(y)});
          const auto m = detail::bilinear(mask, s.x, s.y, 0);
          if (!m) {
            // Outside the warped frame the camera sees the dark prism.
            for (int k = 0; k < 3; ++k) out.ftir.at(x, y, k) = static_cast<std::uint8_t>(kFtirBackground);
          } else if (*m >= 127.5) {
            out.contact_mask.at(x, y) = 255;
          }
        }
    }
  }
  {
    const auto frame = detail::make_frame(settings.direct, settings.px_per_mm, pose);
    Image direct(settings.direct.width, settings.direct.height, ColorSpace::Rgb);
    Rng noise(substream_seed(noise_seed, "direct-noise"));
    for (int y = 0; y < frame.h; ++y) {
      for (int x = 0; x < frame.w; ++x) {
        const Point2 q = frame.to_finger(x, y);
        if (fp.contains(q.x, q.y, 1.15)) {
          // Low-contrast ridges: valleys slightly darker than ridges.
          const double shade = 1.0 + 0.05 * field.ridge(q.x, q.y);
          const int n_common = noise.noise(sigma);
          for (int k = 0; k < 3; ++k) {
            const int chroma = noise.noise(0.35 * sigma);
            direct.at(x, y, k) = detail::clamp_u8(static_cast<int>(std::nearbyint(surface[k] * shade)) + n_common + chroma);
          }
        } else {
          const int n = noise.noise(1.5);
          direct.at(x, y, 0) = detail::clamp_u8(24 + n);
          direct.at(x, y, 1) = detail::clamp_u8(24 + n);
          direct.at(x, y, 2) = detail::clamp_u8(28 + n);
        }
      }
    }
    out.direct = std::move(direct);
  }
  return out;
}

struct CaptureDecision {
  bool accepted = true;
  double top_decile_mean = 0.0;
  std::string reason;  // empty when accepted
};

struct CaptureGateConfig {
  double min_top_decile_mean = 40.0;
};

/// Failure-to-capture check on an FTIR frame: the brightest 10% of pixels
/// must average at least the configured level.
inline CaptureDecision capture_gate(const Image& ftir, const CaptureGateConfig& cfg = {}) {
  const Image gray = ftir.color_space() == ColorSpace::Gray ? ftir : to_grayscale(ftir);
  std::array<std::uint64_t, 256> hist{};
  for (auto v : gray.data()) ++hist[v];
  const std::uint64_t n = gray.pixel_count();
  const std::uint64_t take = std::max<std::uint64_t>(1, n / 10);
  std::uint64_t got = 0, sum = 0;
  for (int v = 255; v >= 0 && got < take; --v) {
    const std::uint64_t k = std::min(hist[v], take - got);
    got += k;
    sum += k * static_cast<std::uint64_t>(v);
  }
  CaptureDecision d;
  d.top_decile_mean = static_cast<double>(sum) / static_cast<double>(got);
  if (d.top_decile_mean < cfg.min_top_decile_mean) {
    d.accepted = false;
    d.reason = "top-decile mean intensity " + std::to_string(d.top_decile_mean) + " below threshold " +
               std::to_string(cfg.min_top_decile_mean);
  }
  return d;
}

}  // namespace ftirpad
