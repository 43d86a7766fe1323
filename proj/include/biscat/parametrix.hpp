#pragma once

#include <complex>
#include <vector>

#include "biscat/amplitude.hpp"
#include "biscat/phase.hpp"

namespace biscat {

/// Configuration of the parametrix sum over reflected stories on the
/// frequency shell [alpha0, beta0]. The remainder order K must satisfy the
/// budget K(1 - 2 c_est eps) - d(2 + c_est eps) >= -(d+1)/2 + 1 together
/// with 2 c_est eps <= 1/2; violations throw at validation time.
struct ParametrixConfig {
  double h = 0.05;
  double eps = 0.1;
  int K = 26;
  int k0 = 0;  // highest transport order kept in the reflected sum (<= 1)
  double alpha0 = 0.5;
  double beta0 = 2.0;
  double eta = 0.0;    // near-source exclusion radius; 0 -> 0.1 * gap
  double c_est = 0.0;  // 0 -> hyperbolic rate log(mu_max)/period
  Vec3 y = Vec3(-3.0, 0.7, 0.0);  // source point
  std::vector<Vec3> x_grid;       // empty -> default grid in supp chi_0
  std::vector<double> t_grid;     // empty -> 2..12 step 1
};

/// Fills defaults from the scene and checks the invariants
/// (0 < alpha0 < beta0, 0 < h < 1/2, remainder budget).
ParametrixConfig parametrix_config(const Scene& scene, ParametrixConfig cfg);

/// Sphere-restricted critical point of S_J(x, xi, t) = phi_J(x, xi)|xi| -
/// t|xi| on the shell |xi| = s. The critical direction is t-independent;
/// phase and two_lambda are stored at t = 0, so S_J at the critical point
/// equals phase - s*t and 2 lambda(t) = two_lambda - t/s.
struct StationaryPhaseData {
  Story J;
  int sign = +1;
  double s = 1.0;            // shell radius
  Vec3 xi;                   // critical point on S^2(0, s)
  double two_lambda = 0.0;   // Lagrange multiplier pair at t = 0
  Mat2 hessian;              // restricted Hessian, tangent frame of xi
  double det = 0.0;          // > 0 away from the source (both eigs < 0)
  double phase = 0.0;        // S_J(x, xi, 0) = |xi| phi_J(x, xi/|xi|)
  double l_J = 0.0;          // arclength from the first reflection to x
  Vec3 b1;                   // backward flow endpoint X^{-|J|}
  double residual = 0.0;     // tangential gradient norm at the solution
  bool degenerate = false;   // det below the 1e-8 floor
};

/// Newton solve on the sphere for the parallelism condition
/// X^{-|J|} - y parallel to xi with positive inner product; the restricted
/// Hessian comes from the Lagrange formula applied to an FD Hessian of
/// the homogeneous phase. Scaling in s is exact: xi, phase and the
/// Hessian at radius s follow from the radius-1 solve (H(s) = H(1)/s).
/// Throws ComputeError when no chart seed converges, when x leaves the
/// domain of phi_J, or when the backward endpoint is closer than eta to y.
StationaryPhaseData critical_point(const Scene& scene, const Vec3& x,
                                   const Vec3& y, const Story& J, double s,
                                   int sign, double eta = 0.0);

/// Decay series sup_x |value|(t) with fitted power-law and exponential
/// rates. For the free term the sup runs over the light-cone window
/// r = |x - y| in [t - 2, t + 2]; for the reflected sum over the x grid.
struct DecayCurve {
  std::vector<double> t;
  std::vector<double> sup;
  double p_hat = 0.0;   // sup ~ t^{-p_hat}
  double nu_hat = 0.0;  // sup ~ e^{-nu_hat t}
  double r_squared_power = 0.0;
  double r_squared_exp = 0.0;
  long excluded = 0;      // degenerate-Hessian contributions dropped
  long near_source = 0;   // contributions dropped by the eta exclusion
  long contributions = 0;
};

/// Frequency-shell window psi on [alpha0, beta0]: quintic smoothstep ramps
/// over a margin of 0.1 (beta0 - alpha0), identically 1 on the plateau.
/// Must match the radial window of the microlocal cutoff so that
/// w_k(x, t, s xi-hat) = psi(s) w_k(x, t, xi-hat).
double shell_window(double s, double alpha0, double beta0);

/// Free shell integral (1/(2 pi^2 h^2 r)) int s psi(s) sin(sr/h) cos(ts/h) ds
/// at r = |x - y| (the frequency-localized free wave with data delta_y).
double free_term_value(const ParametrixConfig& cfg, double r, double t);

/// sup over the light-cone window r in [max(t-2, eta), t+2]; the
/// near-source ball is excluded just as in the reflected sum.
double free_term_sup(const ParametrixConfig& cfg, double t);

/// Decay curve of sup |S_K^empty| over the configured t grid, with the
/// power-law fit of the t^{-(d-1)/2} dispersive rate.
DecayCurve free_term(const ParametrixConfig& cfg);

/// Brute-force 3-D quadrature of the free shell integral (no radial
/// reduction): oracle for free_term_value at desk scale.
double free_term_brute(const ParametrixConfig& cfg, double r, double t,
                       int n_radial = 512, int n_theta = 400, int n_phi = 64);

/// chi_0-localized reflected sum at one point: stationary phase on each
/// sphere |xi| = s, radial Gauss-Legendre over the shell, summed over
/// alternating stories with c1 |J| <= t and transport orders k <= k0.
/// Both wave signs enter as twice the real part of the + family.
/// story_cap_scale > 1 widens the story budget (truncation diagnostics).
double reflected_value(const Scene& scene, const ParametrixConfig& cfg,
                       const SymbolFn& q, const Vec3& x, double t, double c1,
                       double story_cap_scale, DecayCurve& tally);

/// Decay curve of sup_x |chi_0 S_K^r| with the exponential fit nu_hat.
/// The sup runs over the configured x grid plus per-story front points:
/// the radial integral survives only where |phi_J(x) - t| = O(h), so the
/// wavefront crossings of the axial section are located by interpolation
/// and evaluated exactly there. Throws when degenerate-Hessian exclusions
/// exceed 1% of the retained contributions.
DecayCurve reflected_sum(const Scene& scene, const ParametrixConfig& cfg,
                         const StoryCensus& census,
                         double story_cap_scale = 1.0);

struct RemainderBudget {
  double exponent = 0.0;      // K(1 - 2 c eps) - d(2 + c eps)
  double simplified = 0.0;    // K/2 - 3d - 1, valid when 2 c eps <= 1/2
  double required = 0.0;      // -(d+1)/2 + 1
  bool satisfied = false;
  int minimal_K = 0;          // smallest K meeting the simplified condition
  std::vector<double> t;      // implied bound h^{-(d+1)/2} e^{-t/eps}
  std::vector<double> bound;
};

/// Smallest K with K/2 - 3d - 1 >= -(d+1)/2 + 1.
int minimal_remainder_order(int d = 3);

/// Scalar budget of the remainder R_K; throws when the configured K fails
/// the sufficiency condition, naming the minimal fixing order.
RemainderBudget remainder_budget(const ParametrixConfig& cfg);

}  // namespace biscat
