#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "ftirpad/error.hpp"

namespace ftirpad {

/// Prism/camera arrangement of the dual-camera reader.  Angles are measured
/// with respect to the platen normal, as the critical angle is.
struct GeometrySpec {
  double n_glass = 1.5;
  double n_air = 1.0;
  double theta_direct_deg = 10.0;
  double theta_ftir_deg = 45.0;
  double camera_distance_mm = 50.0;

  void validate() const {
    if (!(n_air > 0.0) || !(n_glass > n_air))
      throw ConfigError("geometry requires n_glass > n_air > 0");
    if (!(theta_direct_deg >= 0.0 && theta_direct_deg < 90.0))
      throw ConfigError("theta_direct_deg must lie in [0, 90)");
    if (!(theta_ftir_deg > 0.0 && theta_ftir_deg < 90.0))
      throw ConfigError("theta_ftir_deg must lie in (0, 90)");
  }
};

/// Angle of incidence (degrees) beyond which light travelling in the glass
/// is totally internally reflected at the glass/air boundary.
inline double critical_angle(double n_glass, double n_air) {
  if (!(n_glass > 0.0) || !(n_air > 0.0)) throw ConfigError("refractive indices must be positive");
  if (n_air > n_glass) throw ConfigError("n_air > n_glass: no total internal reflection regime");
  return std::asin(n_air / n_glass) * 180.0 / std::numbers::pi;
}

struct PlacementReport {
  double critical_angle_deg = 0.0;
  bool direct_ok = false;  // direct camera sits strictly below the critical angle
  bool ftir_ok = false;    // FTIR camera sits strictly above it

  bool ok() const { return direct_ok && ftir_ok; }
};

inline PlacementReport validate_geometry(const GeometrySpec& spec) {
  spec.validate();
  PlacementReport r;
  r.critical_angle_deg = critical_angle(spec.n_glass, spec.n_air);
  r.direct_ok = spec.theta_direct_deg < r.critical_angle_deg;
  r.ftir_ok = spec.theta_ftir_deg > r.critical_angle_deg;
  return r;
}

}  // namespace ftirpad
