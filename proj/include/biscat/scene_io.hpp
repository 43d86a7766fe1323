#pragma once

#include <string>

#include "biscat/geometry.hpp"

namespace biscat {

/// Builds a scene from its JSON description:
/// {
///   "bodies": [
///     {"type": "sphere", "center": [0,0,0], "radius": 1.0},
///     {"type": "ellipsoid", "center": [4,0,0], "semi_axes": [1,1,1],
///      "orientation": [[1,0,0],[0,1,0],[0,0,1]]}   // optional, row-major
///   ],
///   "cylinder_radius": 0.3,   // optional
///   "delta1": 1e-2,           // optional
///   "tangency_tol": 1e-8      // optional
/// }
/// Exactly two bodies; ComputeError names the offending field on a
/// malformed document.
Scene parse_scene(const std::string& json_text);

/// parse_scene on the file contents; the literal name "standard" yields
/// the built-in two-unit-sphere scene.
Scene load_scene(const std::string& path);

}  // namespace biscat
