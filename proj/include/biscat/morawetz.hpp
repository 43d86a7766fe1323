#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "biscat/billiard.hpp"

namespace biscat {

using VecN = Eigen::VectorXd;
using MatN = Eigen::MatrixXd;

/// Morawetz weight with closed-form derivatives. Dimension-generic
/// because the ellipsoid gauges live in R^4 after the cylindrical lift.
struct Weight {
  std::string kind;
  int dim = 3;
  std::function<double(const VecN&)> value;
  std::function<VecN(const VecN&)> gradient;
  std::function<MatN(const VecN&)> hessian;
  std::function<double(const VecN&)> laplacian;
  std::function<double(const VecN&)> bilaplacian;
};

/// chi(x) = |x| + |x - c| on R^3.
Weight two_center_weight(const Vec3& c);

/// Ellipsoid gauge rho(x) = sqrt(x_1^2+..+x_k^2 + eps(x_{k+1}^2+..+x_n^2)).
Weight gauge_weight(int n, int k, double eps);

/// Lift rho~(x, z) = sqrt(rho(x)^2 + z^2) on R^{n+1}; the z coordinate
/// joins the unit-coefficient block, so this is gauge_weight(n+1, k+1)
/// up to coordinate order (z is the last coordinate here).
Weight cylindrical_extension(int n, int k, double eps);

/// Quadratic/cubic/quartic coefficient lists of the three bilaplacian
/// polynomials, lowest degree first, and the sign threshold eps0.
struct BilaplacianThreshold {
  std::vector<double> A;  // degree 2
  std::vector<double> B;  // degree 3
  std::vector<double> C;  // degree 4
  double eps0 = 0.0;
  double eval_A(double eps) const;
  double eval_B(double eps) const;
  double eval_C(double eps) const;
};

BilaplacianThreshold bilaplacian_threshold(int n, int k);

struct BilaplacianVerdict {
  bool nonpositive = false;  // closed form <= tol at every sample
  bool fd_consistent = false;
  double max_value = 0.0;     // sup of the closed form over the samples
  double max_fd_error = 0.0;  // relative, against 4th-order FD
  int samples_used = 0;
};

/// Closed-form Delta^2 rho vs finite differences on random samples
/// away from the singular set rho < 1e-3.
BilaplacianVerdict verify_bilaplacian(int n, int k, double eps, int samples,
                                      std::uint64_t seed);

struct TwoCenterReport {
  double lambda2_max_mismatch = 0.0;  // closed form vs eigensolve
  double excluded_fraction = 0.0;     // MC measure of the set sin^2 < alpha
  double min_form_constant = 0.0;     // inf over V(alpha) of (D^2chi xi,xi)/(alpha|xi|^2)
  int samples_used = 0;
  int samples_skipped = 0;  // too close to a center
};

/// Largest eigenvalue of the tangential 2x2 block of D^2(|x| + |x-c|).
double two_center_lambda2(const Vec3& x, const Vec3& c);

/// Monte-Carlo study of the two-center Hessian over Omega cap B(0,A):
/// lambda2 closed form, V(alpha) membership and the excluded measure.
TwoCenterReport two_center_analysis(const Vec3& c, double A, double alpha,
                                    int samples, std::uint64_t seed);

struct WeightReport {
  bool hessian_psd = false;
  bool bilaplacian_nonpos = false;
  bool laplacian_nonneg = false;
  bool boundary_flux_nonneg = false;  // -grad(chi).n >= 0 on the obstacles
  double min_flux = 0.0;
  double min_hessian_eig = 0.0;
  double max_bilaplacian = 0.0;
  double min_laplacian = 0.0;
  int interior_samples = 0;
  int boundary_samples = 0;
};

/// Certificate for the momentum-identity sign hypotheses of a weight
/// over the scene's exterior domain.
WeightReport flux_and_identity_certificate(const Weight& w, const Scene& scene,
                                           int samples, std::uint64_t seed);

struct IlluminationReport {
  double margin = 0.0;  // min grad(rho).nu over the boundary samples
  Vec3 argmin = Vec3::Zero();
  int samples_used = 0;
};

/// Illumination margin of a body K by the convex set with gauge rho:
/// min over the sampled boundary of grad(rho).nu (Defn: positive margin
/// means K is illuminated).
IlluminationReport illumination_report(const Weight& rho,
                                       const std::vector<Vec3>& boundary,
                                       const std::vector<Vec3>& normals);

/// 2 asinh(T): the logarithmic flux gain of the cylindrical extension.
double log_factor(double T);

}  // namespace biscat
