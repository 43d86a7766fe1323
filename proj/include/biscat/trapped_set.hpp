#pragma once

#include <string>
#include <vector>

#include "biscat/billiard.hpp"

namespace biscat {

/// Reference cylinder D around the trapped ray.
struct Cylinder {
  Vec3 center;
  Vec3 axis;  // unit
  double radius = 0.0;
  double half_length = 0.0;

  bool contains(const Vec3& x) const;

  /// Default D: scene cylinder radius, axial margin 10% of the gap.
  static Cylinder standard(const Scene& scene);
};

/// Time the broken ray from (x, dir) keeps its position inside D,
/// capped at t_cap. Negative if x starts outside D.
double stay_time(const Scene& scene, const Cylinder& D, const Vec3& x,
                 const Vec3& dir, double t_cap);

/// max over the two directions +-dir; membership in the trapped set at
/// time T is stay_time_sym >= T.
double stay_time_sym(const Scene& scene, const Cylinder& D, const Vec3& x,
                     const Vec3& dir, double t_cap);

/// First time interval [t_in, t_out] the ray position spends inside D
/// (x need not start in D). Empty occupancy gives t_in > t_out.
std::pair<double, double> occupancy_interval(const Scene& scene,
                                             const Cylinder& D, const Vec3& x,
                                             const Vec3& dir, double t_cap);

struct TrappedGridSpec {
  int n_axial = 15;
  int n_trans = 11;  // per transverse position axis
  int n_slope = 11;  // per direction-slope axis
  double slope_max = 0.5;
  double t_cap = 16.0;
};

/// Grid of symmetric stay times over (x, xi). Directions are parameterized
/// by slopes (p, q) against the scene axis: xi = normalize(e + p f1 + q f2);
/// by the +- symmetry of membership one sheet represents both.
class TrappedSetGrid {
 public:
  TrappedGridSpec spec;
  Cylinder D;
  double T = 0.0;
  bool under_resolved = false;
  std::vector<float> stay;  // flattened (ia, iu, iv, ip, iq); -1 outside D

  std::size_t index(int ia, int iu, int iv, int ip, int iq) const;
  bool member(int ia, int iu, int iv, int ip, int iq) const;
  Vec3 point(const Scene& scene, int ia, int iu, int iv) const;
  Vec3 direction(const Scene& scene, int ip, int iq) const;

  double axial_spacing() const;
  double trans_spacing() const;
  double slope_spacing() const;
};

TrappedSetGrid compute_trapped_set(const Scene& scene, const Cylinder& D,
                                   double T, const TrappedGridSpec& spec = {});

/// Documented binary layout: magic "TSG1", int32 dims[5], float64
/// {radius, half_length, T, spacings[3]}, then float32 stay values.
void write_membership(const TrappedSetGrid& grid, const std::string& path);

struct ShrinkageFit {
  double c_est = 0.0;
  double r_squared = 0.0;
  double T_star = 0.0;
  std::vector<double> T_values;
  std::vector<double> distances;
};

/// Fits log d(T_{T-T*}(D)^c, T_T(D)) vs T on a refined transverse section
/// of the stay-time field; slope is -c_est.
ShrinkageFit shrinkage_fit(const Scene& scene, const Cylinder& D,
                           const std::vector<double>& T_list,
                           int section_res = 1024, double T_star = 2.0);

/// Microlocal cutoff q(x, xi): smooth ramp in the stay-time field across
/// the threshold 2 eps |log h|, times a radial window on |xi|.
class CutoffSymbol {
 public:
  double eps = 0.0, h = 0.0;
  double alpha0 = 0.5, beta0 = 2.0;
  double c_est = 0.0;
  double width = 0.0;        // h^{2 c_est eps}, the transition scale
  double T_threshold = 0.0;  // 2 eps |log h|
  double t_cap = 0.0;

  double operator()(const Vec3& x, const Vec3& xi) const;

  CutoffSymbol(Scene scene, double eps, double h, double alpha0, double beta0,
               double c_est);

 private:
  Scene scene_;
  Cylinder D_;
};

/// c_est <= 0 means: use the hyperbolic rate log(mu_max)/period.
CutoffSymbol build_cutoff(const Scene& scene, double eps, double h,
                          double alpha0 = 0.5, double beta0 = 2.0,
                          double c_est = 0.0);

struct CutoffGrowth {
  std::vector<double> h_values;
  std::vector<double> sup_grad;
  double exponent = 0.0;  // fitted slope of log sup|dq| vs log(1/h)
};

/// FD ladder over h in {2^-4 .. 2^-9} measuring sup|dq|.
CutoffGrowth cutoff_derivative_growth(const Scene& scene, double eps,
                                      double alpha0 = 0.5, double beta0 = 2.0);

}  // namespace biscat
