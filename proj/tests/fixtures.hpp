#pragma once

// Dataset configurations shared by the evaluation tests and the acceptance run.

#include "ftirpad/dataset.hpp"

namespace fixtures {

using ftirpad::DatasetConfig;
using ftirpad::MaterialSpec;

/// Spoofs far from every live hue, at reduced render size.
inline DatasetConfig hue_disjoint() {
  DatasetConfig c;
  c.name = "hue-disjoint";
  c.live = {4, 2, 3};
  c.materials = {{{"Teal", 100, 1.0, 4.0, 0.0, 1.0}, 2, 3}, {{"Violet", 170, 1.0, 4.0, 0.0, 1.0}, 2, 3}};
  c.render.ftir = {290, 216};
  c.render.direct = {290, 192};
  c.render.px_per_mm = 10.0;
  return c;
}

/// Two materials, each visible in only one view: "HueOnly" differs from
/// skin in surface hue alone, so only the direct view shows it; "FtirOnly"
/// keeps the skin color but reflects less FTIR light.  The FTIR view carries
/// no surface color.
inline DatasetConfig complementary() {
  DatasetConfig c;
  c.name = "complementary";
  c.live = {6, 2, 3};
  c.materials = {{{"HueOnly", 60, 1.0, 4.0, 0.0, 1.0}, 4, 3}, {{"FtirOnly", 0, 1.0, 4.0, 0.0, 0.35}, 4, 3}};
  c.render.ftir_tint_saturation = 0.0;
  return c;
}

}  // namespace fixtures
