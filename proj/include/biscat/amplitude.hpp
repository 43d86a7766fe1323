#pragma once

#include <functional>
#include <string>
#include <vector>

#include "biscat/phase.hpp"

namespace biscat {

/// Phase-space symbol q(x, xi) entering the transport amplitudes.
using SymbolFn = std::function<double(const Vec3&, const Vec3&)>;

/// Gaussian-curvature ratio of a reflected phase along its ray, as the
/// product of per-leg tube-area factors (plane legs contribute 1).
struct CurvatureProduct {
  Story J;
  double value = 1.0;
  std::vector<double> factors;  // one per leg, launch plane to x
};

/// The incident plane wave travels along xi from far behind the obstacles;
/// the launch plane only fixes an additive phase constant, so no source
/// point enters.
CurvatureProduct curvature_product(const Scene& scene, const Vec3& x,
                                   const Vec3& xi, const Story& J);

struct PatternReport {
  std::string label;     // e.g. "I=(2,1), l={2}"
  double a_est = 0.0;    // limit estimate of Lambda/lambda^r
  double alpha = 0.0;    // fitted geometric rate of the residue
  double r_squared = 0.0;
  bool geometric = true;  // false when the residue fit has R^2 < 0.8
  std::vector<double> values;  // Lambda/lambda^r per r
};

struct ConvergenceReport {
  double lambda = 0.0;
  std::vector<PatternReport> patterns;
};

/// Convergence of Lambda_phi_J / lambda^r across periodic-block stories,
/// per repetition pattern and tail.
ConvergenceReport convergence_check(const Scene& scene, int r_max);

struct TermSpec {
  Story J;
  int sign = +1;  // + uses phases built with xi, - with -xi
  int k = 0;
};

/// Transport amplitude w_k^{J,+/-}(x, t) for the symbol q. k=0 is the
/// closed curvature-product formula; k=1 integrates the d'Alembertian of
/// the k=0 term along the backward flow (centered FD with step fd_step;
/// 0 picks a default tied to the symbol scale).
double amplitude_eval(const Scene& scene, const TermSpec& term, const Vec3& x,
                      double t, const Vec3& xi, const SymbolFn& q,
                      double fd_step = 0.0);

struct CensusRow {
  double t = 0.0;
  int count = 0;
};

struct StoryCensus {
  double c1 = 0.0;  // measured: support of w_0^J starts after c1 |J|
  double c2 = 0.0;  // measured: chi_0-localized support ends by c2 (|J|+1)
  std::vector<CensusRow> rows;
  double slope = 0.0;  // linear fit of count vs t
  double intercept = 0.0;
};

/// Count of stories with nonvanishing chi_0-localized w_0 terms per time.
/// chi_0 localizes to the inter-obstacle region away from the boundaries.
StoryCensus story_census(const Scene& scene, double t_max, const SymbolFn& q);

}  // namespace biscat
