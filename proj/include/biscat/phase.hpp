#pragma once

#include <vector>

#include "biscat/billiard.hpp"

namespace biscat {

/// Point sample of a reflected phase front. curvature is the level-surface
/// curvature operator embedded in 3x3 form (kernel along grad, PSD).
struct WavefrontSample {
  Vec3 x;
  double phase = 0.0;
  Vec3 grad;        // unit (eikonal)
  Mat3 curvature;   // kernel along grad
  Story story;
  int sign = +1;
  double l_J = 0.0;  // arclength from the first reflection b1 to x
  Vec3 b1;           // first reflection point (x itself for empty story)
  double curv_product = 1.0;  // accumulated Gaussian-curvature ratio

  /// 2x2 restriction of the curvature to a frame orthogonal to grad.
  Mat2 curvature2(const TangentFrame& frame) const;
};

struct PhaseQuery {
  Vec3 x;
  Vec3 xi;  // nonzero; only the direction enters
  Story J;
  Vec3 y;  // source point of the incident plane phase (x - y) . xi/|xi|
};

/// Reflected phase by two-point Newton shooting on the launch plane
/// through y orthogonal to xi. Throws ComputeError when x is not in the
/// domain of phi_J (no admissible launch among the seeds).
WavefrontSample evaluate_phase(const Scene& scene, const PhaseQuery& query);

/// One straight segment of the solved broken ray.
struct RayLeg {
  Vec3 start;
  Vec3 dir;
  double length = 0.0;
  Mat3 curvature;         // wavefront curvature at the leg start
  double area_det = 1.0;  // det2(I + length * curvature): tube-area ratio
};

/// The full broken ray of the shooting solve, launch plane to x. The last
/// leg ends at query.x; the product of 1/area_det over legs is the
/// Gaussian-curvature ratio of the reflected phase.
std::vector<RayLeg> phase_ray(const Scene& scene, const PhaseQuery& query);

/// Free transport by tau >= 0: x' = x + tau grad, kappa' = kappa/(1+tau kappa).
WavefrontSample propagate_wavefront(const WavefrontSample& s, double tau);

/// Specular reflection of the front at a boundary hit (dispersing mirror).
WavefrontSample reflect_wavefront(const WavefrontSample& s, const Hit& hit);

/// Curvature operator of the reflected front, exposed for oracle tests:
/// Q is the incident curvature at the hit point, returns the reflected one.
Mat3 reflect_curvature(const Mat3& Q, const Vec3& d, const Hit& hit);

struct GrowthRow {
  Story J;
  double sup_dx = 0.0;   // FD estimate of |D_x grad phi_J| over samples
  double sup_dxi = 0.0;  // FD estimate of |D_xi grad phi_J|
  bool reliable = true;
};

struct GrowthTable {
  std::vector<GrowthRow> rows;
  double slope_dx = 0.0;   // fitted slope of log sup vs |J|
  double slope_dxi = 0.0;
};

/// Mixed-derivative growth across the alternating story family
/// (2), (2,1), (2,1,2), ... up to max_story_len.
GrowthTable derivative_growth_certificate(const Scene& scene,
                                          int max_story_len, const Vec3& y,
                                          const Vec3& xi);

}  // namespace biscat
