#pragma once

#include <optional>

#include "mftrack/core.hpp"
#include "mftrack/features.hpp"

namespace mft {

// One detection in one frame: geometry plus extracted appearance.
struct DetectedObject {
  ObjectKey key;
  BBox2D bbox;
  std::optional<WorldPoint3> world;
  Appearance appearance;

  int frame() const { return key.frame; }
};

}  // namespace mft
