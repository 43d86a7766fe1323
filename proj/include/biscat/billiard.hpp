#pragma once

#include <vector>

#include "biscat/geometry.hpp"

namespace biscat {

struct PhasePoint {
  Vec3 x;
  Vec3 xi;  // unit direction, speed-one convention
};

/// Alternating sequence of obstacle indices in {1, 2}.
using Story = std::vector<int>;

bool story_valid(const Story& j);

struct ReflectionEvent {
  double time = 0.0;
  int body = 0;
  Vec3 point;
  Vec3 normal;
  double incidence_cos = 0.0;  // -xi_in . n
};

struct Trajectory {
  PhasePoint initial;
  std::vector<ReflectionEvent> events;
  PhasePoint final_state;
  Story story;
  bool escaped = false;
  bool tangential = false;
  double time = 0.0;
};

/// Specular reflection. Requires xi.n < 0.
Vec3 reflect_direction(const Vec3& xi, const Vec3& n);

/// Broken bicharacteristic flow for time t.
Trajectory flow(const Scene& scene, const PhasePoint& p, double t);

/// Backward spatial flow constrained to the story J: reflections are
/// consumed in reverse story order, hits on the other obstacle are ignored,
/// and all obstacles are ignored once |J| reflections were consumed.
Vec3 backward_flow_constrained(const Scene& scene, const Vec3& x,
                               const Vec3& grad, const Story& story, double t);

struct ReturnMapAnalysis {
  double period = 0.0;
  Eigen::Matrix4d monodromy;  // transverse coords (u, v, pu, pv)
  std::vector<std::complex<double>> eigenvalues;
  double lambda = 0.0;   // product of the two contracting eigenvalues
  double mu_max = 0.0;   // largest eigenvalue magnitude
  double block_det1 = 0.0, block_det2 = 0.0;
};

/// Central-difference linearization of the full-period (two-reflection)
/// Poincare return map on the transverse midplane section.
ReturnMapAnalysis return_map(const Scene& scene,
                             double fd_step_factor = 1e-5);

}  // namespace biscat
