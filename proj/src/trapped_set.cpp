#include "biscat/trapped_set.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>

#include "biscat/fitting.hpp"

namespace biscat {

bool Cylinder::contains(const Vec3& x) const {
  Vec3 w = x - center;
  double a = w.dot(axis);
  if (std::abs(a) > half_length) return false;
  return (w - a * axis).squaredNorm() <= radius * radius;
}

Cylinder Cylinder::standard(const Scene& scene) {
  Cylinder D;
  D.center = scene.midpoint();
  D.axis = scene.axis();
  D.radius = scene.config().cylinder_radius;
  D.half_length = 0.5 * scene.gap() + 0.1 * scene.gap();
  return D;
}

namespace {

// First exit time of x + t*dir from the cylinder, starting inside.
double cylinder_exit(const Cylinder& D, const Vec3& x, const Vec3& dir) {
  Vec3 w = x - D.center;
  double a0 = w.dot(D.axis);
  double da = dir.dot(D.axis);
  double t_ax = std::numeric_limits<double>::infinity();
  if (da > 1e-15)
    t_ax = (D.half_length - a0) / da;
  else if (da < -1e-15)
    t_ax = (-D.half_length - a0) / da;

  Vec3 wp = w - a0 * D.axis;
  Vec3 dp = dir - da * D.axis;
  double t_rad = std::numeric_limits<double>::infinity();
  double c2 = dp.squaredNorm();
  if (c2 > 1e-30) {
    double c1 = wp.dot(dp);
    double c0 = wp.squaredNorm() - D.radius * D.radius;
    double disc = c1 * c1 - c2 * c0;
    if (disc >= 0.0) t_rad = (-c1 + std::sqrt(disc)) / c2;  // outgoing root
  }
  return std::max(0.0, std::min(t_ax, t_rad));
}

double smoothstep5(double s) {
  if (s <= 0.0) return 0.0;
  if (s >= 1.0) return 1.0;
  return s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
}

}  // namespace

double stay_time(const Scene& scene, const Cylinder& D, const Vec3& x,
                 const Vec3& dir, double t_cap) {
  if (!D.contains(x)) return -1.0;
  if (scene.body(1).contains(x) || scene.body(2).contains(x)) return -1.0;
  Trajectory traj = flow(scene, {x, dir}, t_cap);
  Vec3 p = x;
  Vec3 d = dir.normalized();
  double elapsed = 0.0;
  for (const auto& ev : traj.events) {
    double seg = ev.time - elapsed;
    double exit = cylinder_exit(D, p, d);
    if (exit < seg) return elapsed + exit;
    elapsed = ev.time;
    p = ev.point;
    d = reflect_direction(d, ev.normal);
  }
  if (traj.tangential) return elapsed;  // truncated; conservative
  double seg = traj.time - elapsed;
  double exit = cylinder_exit(D, p, d);
  if (exit < seg) return elapsed + exit;
  return t_cap;
}

namespace {

// Interval of t in [0, len] with x + t*dir inside the cylinder.
std::pair<double, double> cylinder_segment(const Cylinder& D, const Vec3& x,
                                           const Vec3& dir, double len) {
  Vec3 w = x - D.center;
  double a0 = w.dot(D.axis), da = dir.dot(D.axis);
  double lo = 0.0, hi = len;
  if (std::abs(da) < 1e-15) {
    if (std::abs(a0) > D.half_length) return {1.0, 0.0};
  } else {
    double t1 = (-D.half_length - a0) / da, t2 = (D.half_length - a0) / da;
    lo = std::max(lo, std::min(t1, t2));
    hi = std::min(hi, std::max(t1, t2));
  }
  Vec3 wp = w - a0 * D.axis;
  Vec3 dp = dir - da * D.axis;
  double c2 = dp.squaredNorm();
  if (c2 > 1e-30) {
    double c1 = wp.dot(dp);
    double c0 = wp.squaredNorm() - D.radius * D.radius;
    double disc = c1 * c1 - c2 * c0;
    if (disc < 0.0) return {1.0, 0.0};
    double r = std::sqrt(disc);
    lo = std::max(lo, (-c1 - r) / c2);
    hi = std::min(hi, (-c1 + r) / c2);
  } else if (wp.squaredNorm() > D.radius * D.radius) {
    return {1.0, 0.0};
  }
  return {lo, hi};
}

}  // namespace

std::pair<double, double> occupancy_interval(const Scene& scene,
                                             const Cylinder& D, const Vec3& x,
                                             const Vec3& dir, double t_cap) {
  Trajectory traj = flow(scene, {x, dir.normalized()}, t_cap);
  Vec3 p = x;
  Vec3 d = dir.normalized();
  double elapsed = 0.0;
  double t_in = 1.0, t_out = 0.0;
  bool open = false;
  auto scan = [&](double seg) {
    auto [lo, hi] = cylinder_segment(D, p, d, seg);
    if (lo <= hi) {
      if (!open && t_out < t_in) {
        t_in = elapsed + lo;
        open = true;
      }
      if (open) t_out = elapsed + hi;
      if (open && hi < seg - 1e-12) open = false;  // left D inside segment
    } else if (open) {
      open = false;
    }
  };
  for (const auto& ev : traj.events) {
    if (t_out >= t_in && !open) break;  // first interval closed
    scan(ev.time - elapsed);
    elapsed = ev.time;
    p = ev.point;
    d = reflect_direction(d, ev.normal);
  }
  if (!(t_out >= t_in && !open)) scan(traj.time - elapsed);
  return {t_in, t_out};
}

double stay_time_sym(const Scene& scene, const Cylinder& D, const Vec3& x,
                     const Vec3& dir, double t_cap) {
  double a = stay_time(scene, D, x, dir, t_cap);
  if (a >= t_cap) return a;
  return std::max(a, stay_time(scene, D, x, -dir, t_cap));
}

std::size_t TrappedSetGrid::index(int ia, int iu, int iv, int ip,
                                  int iq) const {
  return ((((std::size_t)ia * spec.n_trans + iu) * spec.n_trans + iv) *
              spec.n_slope +
          ip) *
             spec.n_slope +
         iq;
}

bool TrappedSetGrid::member(int ia, int iu, int iv, int ip, int iq) const {
  return stay[index(ia, iu, iv, ip, iq)] >= (float)T;
}

double TrappedSetGrid::axial_spacing() const {
  return 2.0 * D.half_length / (spec.n_axial - 1);
}
double TrappedSetGrid::trans_spacing() const {
  return 2.0 * D.radius / (spec.n_trans - 1);
}
double TrappedSetGrid::slope_spacing() const {
  return 2.0 * spec.slope_max / (spec.n_slope - 1);
}

Vec3 TrappedSetGrid::point(const Scene& scene, int ia, int iu, int iv) const {
  const TangentFrame& f = scene.transverse_frame();
  double a = -D.half_length + ia * axial_spacing();
  double u = -D.radius + iu * trans_spacing();
  double v = -D.radius + iv * trans_spacing();
  return D.center + a * D.axis + u * f.t1 + v * f.t2;
}

Vec3 TrappedSetGrid::direction(const Scene& scene, int ip, int iq) const {
  const TangentFrame& f = scene.transverse_frame();
  double p = -spec.slope_max + ip * slope_spacing();
  double q = -spec.slope_max + iq * slope_spacing();
  return (D.axis + p * f.t1 + q * f.t2).normalized();
}

TrappedSetGrid compute_trapped_set(const Scene& scene, const Cylinder& D,
                                   double T, const TrappedGridSpec& spec) {
  if (!D.contains(scene.midpoint()))
    throw ComputeError("trapped set: D does not contain the trapped ray");
  if (T > spec.t_cap)
    throw ComputeError("trapped set: T exceeds the stay-time cap");
  TrappedSetGrid g;
  g.spec = spec;
  g.D = D;
  g.T = T;
  g.stay.assign((std::size_t)spec.n_axial * spec.n_trans * spec.n_trans *
                    spec.n_slope * spec.n_slope,
                -1.0f);

#pragma omp parallel for collapse(2) schedule(dynamic)
  for (int ia = 0; ia < spec.n_axial; ++ia)
    for (int iu = 0; iu < spec.n_trans; ++iu)
      for (int iv = 0; iv < spec.n_trans; ++iv) {
        Vec3 x = g.point(scene, ia, iu, iv);
        for (int ip = 0; ip < spec.n_slope; ++ip)
          for (int iq = 0; iq < spec.n_slope; ++iq)
            g.stay[g.index(ia, iu, iv, ip, iq)] = (float)stay_time_sym(
                scene, D, x, g.direction(scene, ip, iq), spec.t_cap);
      }

  ReturnMapAnalysis rm = return_map(scene);
  double rate = std::log(rm.mu_max) / rm.period;
  double max_spacing = std::max(
      {g.axial_spacing(), g.trans_spacing(), g.slope_spacing()});
  g.under_resolved = max_spacing > std::exp(-rate * T);
  return g;
}

void write_membership(const TrappedSetGrid& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ComputeError("cannot open " + path);
  out.write("TSG1", 4);
  int32_t dims[5] = {g.spec.n_axial, g.spec.n_trans, g.spec.n_trans,
                     g.spec.n_slope, g.spec.n_slope};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  double meta[6] = {g.D.radius,        g.D.half_length,  g.T,
                    g.axial_spacing(), g.trans_spacing(), g.slope_spacing()};
  out.write(reinterpret_cast<const char*>(meta), sizeof(meta));
  out.write(reinterpret_cast<const char*>(g.stay.data()),
            (std::streamsize)(g.stay.size() * sizeof(float)));
}

namespace {

// Sliding-window minimum, half-width k, clamped at the ends.
void min_filter_line(const float* in, float* out, int n, int stride, int k) {
  std::deque<int> dq;
  for (int i = -k; i < n; ++i) {
    int add = i + k;
    if (add < n) {
      while (!dq.empty() && in[(std::size_t)dq.back() * stride] >=
                                in[(std::size_t)add * stride])
        dq.pop_back();
      dq.push_back(add);
    }
    if (i < 0) continue;
    while (!dq.empty() && dq.front() < i - k) dq.pop_front();
    // window clamps at the domain edge: the comparison is made among rays
    // launched inside the section only
    out[(std::size_t)i * stride] =
        in[(std::size_t)dq.front() * stride];
  }
}

// 2D separable erosion (L-infinity box) of the stay field.
void min_filter_2d(const std::vector<float>& in, std::vector<float>& tmp,
                   std::vector<float>& out, int nu, int np, int ku, int kp) {
  tmp.resize(in.size());
  out.resize(in.size());
  for (int j = 0; j < np; ++j)
    min_filter_line(in.data() + j, tmp.data() + j, nu, np, ku);
  for (int i = 0; i < nu; ++i)
    min_filter_line(tmp.data() + (std::size_t)i * np,
                    out.data() + (std::size_t)i * np, np, 1, kp);
}

}  // namespace

ShrinkageFit shrinkage_fit(const Scene& scene, const Cylinder& D,
                           const std::vector<double>& T_list, int section_res,
                           double T_star) {
  if (T_list.size() < 4)
    throw ComputeError("shrinkage fit: need at least 4 values of T");
  double T_max = *std::max_element(T_list.begin(), T_list.end());
  for (double T : T_list)
    if (T <= T_star) throw ComputeError("shrinkage fit: T must exceed T*");

  // Stay-time field on a transverse section of phase space: positions
  // mid + u f1 inside D, directions along e + p f1. Rays are compared
  // among launches inside D, where "in D at time T" and "in D throughout
  // [0,T]" agree (a ray leaving the cylinder never re-enters, the
  // obstacles are dispersing). The contraction rate of the sets is
  // direction-independent (hyperbolicity), so this section slice can be
  // refined far beyond what the full grid affords.
  const int nu = section_res, np = 2 * section_res;
  const TangentFrame& f = scene.transverse_frame();
  const double slope_max = 1.2;
  double wu = 2.0 * D.radius / (nu - 1);
  double wp = 2.0 * slope_max / (np - 1);
  double t_cap = T_max + 1.0;
  std::vector<float> stay((std::size_t)nu * np);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < nu; ++i) {
    double u = -D.radius + i * wu;
    Vec3 x = D.center + u * f.t1;
    for (int j = 0; j < np; ++j) {
      double p = -slope_max + j * wp;
      Vec3 dir = (D.axis + p * f.t1).normalized();
      stay[(std::size_t)i * np + j] =
          (float)stay_time_sym(scene, D, x, dir, t_cap);
    }
  }

  ShrinkageFit fit;
  fit.T_star = T_star;
  std::vector<float> tmp, eroded;
  double w_min = std::min(wu, wp);
  for (double T : T_list) {
    // d = sup{ r : {stay >= T} contained in the r-erosion of
    //           {stay >= T - T*} }, scaled L-infinity metric
    auto contained = [&](double r) {
      int ku = (int)std::floor(r / wu);
      int kp = (int)std::floor(r / wp);
      min_filter_2d(stay, tmp, eroded, nu, np, ku, kp);
      for (std::size_t idx = 0; idx < stay.size(); ++idx)
        if (eroded[idx] < (float)(T - T_star) && stay[idx] >= (float)T)
          return false;
      return true;
    };
    double lo = 0.0, hi = 2.0 * D.radius;
    if (!contained(0.0)) {
      fit.T_values.push_back(T);
      fit.distances.push_back(0.0);
      continue;
    }
    while (hi - lo > 0.25 * w_min) {
      double mid = 0.5 * (lo + hi);
      (contained(mid) ? lo : hi) = mid;
    }
    fit.T_values.push_back(T);
    fit.distances.push_back(lo);
  }

  bool all_floor = true;
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < fit.distances.size(); ++i) {
    if (fit.distances[i] > 1.5 * std::max(wu, wp)) all_floor = false;
    if (fit.distances[i] <= 0.0)
      throw ComputeError("shrinkage fit: zero distance sampled");
    xs.push_back(fit.T_values[i]);
    ys.push_back(std::log(fit.distances[i]));
  }
  if (all_floor)
    throw ComputeError("shrinkage fit: distances at grid floor, "
                       "increase section resolution");
  LineFit line = fit_line(xs, ys);
  fit.c_est = -line.slope;
  fit.r_squared = line.r_squared;
  return fit;
}

CutoffSymbol::CutoffSymbol(Scene scene, double eps_, double h_, double a0,
                           double b0, double c)
    : eps(eps_), h(h_), alpha0(a0), beta0(b0), c_est(c),
      scene_(std::move(scene)) {
  if (!(h > 0.0 && h < 0.5)) throw ComputeError("cutoff: need 0 < h < 1/2");
  if (eps <= 0.0) throw ComputeError("cutoff: need eps > 0");
  if (!(alpha0 > 0.0 && alpha0 < beta0))
    throw ComputeError("cutoff: need 0 < alpha0 < beta0");
  width = std::pow(h, 2.0 * c_est * eps);
  if (width < 1e-9)
    throw ComputeError("cutoff: smoothing width below resolution floor");
  T_threshold = 2.0 * eps * std::abs(std::log(h));
  t_cap = T_threshold + 4.0;
  D_ = Cylinder::standard(scene_);
}

double CutoffSymbol::operator()(const Vec3& x, const Vec3& xi) const {
  double s = xi.norm();
  if (s <= 0.0) return 0.0;
  double margin = 0.1 * (beta0 - alpha0);
  double radial = smoothstep5((s - alpha0) / margin) *
                  smoothstep5((beta0 - s) / margin);
  if (radial == 0.0) return 0.0;
  double tau = stay_time_sym(scene_, D_, x, xi / s, t_cap);
  // unit-width ramp in the stay time: by hyperbolicity its spatial scale
  // at the threshold is exp(-c T_threshold) = h^{2 c eps}
  return radial * smoothstep5(tau - T_threshold);
}

CutoffSymbol build_cutoff(const Scene& scene, double eps, double h,
                          double alpha0, double beta0, double c_est) {
  if (c_est <= 0.0) {
    ReturnMapAnalysis rm = return_map(scene);
    c_est = std::log(rm.mu_max) / rm.period;
  }
  return CutoffSymbol(scene, eps, h, alpha0, beta0, c_est);
}

CutoffGrowth cutoff_derivative_growth(const Scene& scene, double eps,
                                      double alpha0, double beta0) {
  ReturnMapAnalysis rm = return_map(scene);
  double c_est = std::log(rm.mu_max) / rm.period;
  CutoffGrowth g;
  const TangentFrame& f = scene.transverse_frame();
  Vec3 mid = scene.midpoint();
  double R = scene.config().cylinder_radius;
  Vec3 xi = scene.axis() * 0.5 * (alpha0 + beta0);
  std::vector<double> log_inv_h, log_sup;
  for (int k = 4; k <= 9; ++k) {
    double h = std::pow(2.0, -k);
    CutoffSymbol q(scene, eps, h, alpha0, beta0, c_est);
    // probe the transition along a transverse line through the midpoint
    const int n = 2400;
    double du = R / (n - 1);
    double prev = q(mid, xi), sup = 0.0;
    for (int i = 1; i < n; ++i) {
      double val = q(mid + (i * du) * f.t1, xi);
      sup = std::max(sup, std::abs(val - prev) / du);
      prev = val;
    }
    if (sup <= 0.0) throw ComputeError("cutoff growth: flat probe line");
    g.h_values.push_back(h);
    g.sup_grad.push_back(sup);
    log_inv_h.push_back(std::log(1.0 / h));
    log_sup.push_back(std::log(sup));
  }
  g.exponent = fit_line(log_inv_h, log_sup).slope;
  return g;
}

}  // namespace biscat
