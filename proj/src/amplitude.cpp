#include "biscat/amplitude.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "biscat/billiard.hpp"
#include "biscat/fitting.hpp"

namespace biscat {

namespace {

// launch plane far behind the obstacles in the propagation direction
Vec3 far_source(const Scene& scene, const Vec3& dir) {
  return scene.midpoint() - 4.0 * scene.diameter() * dir;
}

// det2(I + s K) on the plane transverse to dir (K has kernel along dir)
double det2_shift(const Mat3& k, const Vec3& dir, double s) {
  const TangentFrame f = orthonormal_frame(dir);
  Mat2 k2;
  k2(0, 0) = f.t1.dot(k * f.t1);
  k2(0, 1) = f.t1.dot(k * f.t2);
  k2(1, 0) = f.t2.dot(k * f.t1);
  k2(1, 1) = f.t2.dot(k * f.t2);
  return (Mat2::Identity() + s * k2).determinant();
}

struct BackWalk {
  Vec3 pos;
  size_t crossed = 0;  // reflections consumed backward
  double g = 1.0;      // Gaussian-curvature ratio G(x)/G(pos)
};

// backward spatial flow by tau along the stored broken ray; extends as a
// straight line beyond the launch plane
BackWalk walk_back(const std::vector<RayLeg>& legs, double tau) {
  BackWalk w;
  double remaining = tau;
  for (size_t ri = legs.size(); ri-- > 0;) {
    const RayLeg& leg = legs[ri];
    if (remaining >= leg.length - 1e-14) {
      w.g /= leg.area_det;
      remaining -= leg.length;
      if (ri > 0) {
        ++w.crossed;
      } else {
        w.pos = leg.start - std::max(remaining, 0.0) * leg.dir;
        return w;
      }
    } else {
      const double s = leg.length - remaining;  // arclength from leg start
      w.pos = leg.start + s * leg.dir;
      w.g *= det2_shift(leg.curvature, leg.dir, s) / leg.area_det;
      return w;
    }
  }
  w.pos = legs.front().start;
  return w;
}

double total_length(const std::vector<RayLeg>& legs) {
  double l = 0.0;
  for (const auto& leg : legs) l += leg.length;
  return l;
}

// w_0 along a solved ray: zero before the signal has consumed all
// reflections, else the curvature product times the transported symbol
double w0_from_legs(const std::vector<RayLeg>& legs, double t,
                    const Vec3& xi_orig, const SymbolFn& q) {
  const double l_j = total_length(legs) - legs.front().length;
  if (t < l_j - 1e-12) return 0.0;
  double lambda = 1.0;
  for (const auto& leg : legs) lambda /= leg.area_det;
  const BackWalk w = walk_back(legs, t);
  return 0.5 * lambda * q(w.pos, xi_orig);
}

}  // namespace

CurvatureProduct curvature_product(const Scene& scene, const Vec3& x,
                                   const Vec3& xi, const Story& J) {
  const Vec3 xih = xi.normalized();
  const auto legs =
      phase_ray(scene, PhaseQuery{x, xi, J, far_source(scene, xih)});
  CurvatureProduct out;
  out.J = J;
  for (const auto& leg : legs) {
    out.factors.push_back(1.0 / leg.area_det);
    out.value *= out.factors.back();
  }
  return out;
}

double amplitude_eval(const Scene& scene, const TermSpec& term, const Vec3& x,
                      double t, const Vec3& xi, const SymbolFn& q,
                      double fd_step) {
  if (!q) throw ComputeError("amplitude_eval: empty symbol");
  if (term.k < 0 || term.k > 1)
    throw ComputeError("amplitude_eval: order beyond the configured K_max");
  const double xin = xi.norm();
  if (xin <= 0.0) throw ComputeError("amplitude_eval: zero frequency");
  const Vec3 dir = (term.sign >= 0 ? 1.0 : -1.0) * xi / xin;
  const Vec3 xi_eff = (term.sign >= 0 ? 1.0 : -1.0) * xi;

  if (term.k == 0) {
    if (term.J.empty()) return 0.5 * q(x - t * dir, xi);
    std::vector<RayLeg> legs;
    try {
      legs = phase_ray(scene,
                       PhaseQuery{x, xi_eff, term.J, far_source(scene, dir)});
    } catch (const ComputeError&) {
      return 0.0;  // x outside the domain of phi_J
    }
    return w0_from_legs(legs, t, xi, q);
  }

  // k = 1: w_1 = -int_0^t g(x, t-s) Box w_0^{J(t-s)}(X_{-(t-s)}, s) ds
  const double diam = scene.diameter();
  const double delta = fd_step > 0.0 ? fd_step : 1e-3 * diam;
  if (delta < 1e-6 * diam)
    throw ComputeError("amplitude_eval: FD step under the resolution floor");

  std::vector<RayLeg> legs;
  if (!term.J.empty()) {
    try {
      legs = phase_ray(scene,
                       PhaseQuery{x, xi_eff, term.J, far_source(scene, dir)});
    } catch (const ComputeError&) {
      return 0.0;
    }
  }

  // split the s-integral where the backward flow crosses a reflection
  std::vector<double> cuts{0.0, t};
  if (!term.J.empty()) {
    double back = 0.0;
    for (size_t ri = legs.size(); ri-- > 1;) {
      back += legs[ri].length;
      const double s = t - back;
      if (s > 1e-12 && s < t - 1e-12) cuts.push_back(s);
    }
  }
  std::sort(cuts.begin(), cuts.end());

  const auto integrand = [&](double s) {
    const double tau = t - s;
    Vec3 pos;
    double g = 1.0;
    Story trunc;
    if (term.J.empty()) {
      pos = x - tau * dir;
    } else {
      const BackWalk w = walk_back(legs, tau);
      pos = w.pos;
      g = w.g;
      trunc.assign(term.J.begin(), term.J.end() - w.crossed);
    }
    const auto w0 = [&](const Vec3& p, double tt) {
      return amplitude_eval(scene, TermSpec{trunc, term.sign, 0}, p, tt, xi,
                            q);
    };
    double box = (w0(pos, s + delta) - 2.0 * w0(pos, s) + w0(pos, s - delta)) /
                 (delta * delta);
    for (int c = 0; c < 3; ++c) {
      const Vec3 e = delta * Vec3::Unit(c);
      box -= (w0(pos + e, s) - 2.0 * w0(pos, s) + w0(pos - e, s)) /
             (delta * delta);
    }
    return g * box;
  };

  std::vector<double> nodes, weights;
  double result = 0.0;
  for (size_t i = 0; i + 1 < cuts.size(); ++i) {
    if (cuts[i + 1] - cuts[i] < 1e-14) continue;
    gauss_legendre(10, cuts[i], cuts[i + 1], nodes, weights);
    for (size_t n = 0; n < nodes.size(); ++n)
      result += weights[n] * integrand(nodes[n]);
  }
  return -result;
}

ConvergenceReport convergence_check(const Scene& scene, int r_max) {
  if (r_max < 6) throw ComputeError("convergence_check: need r_max >= 6");
  ConvergenceReport report;
  report.lambda = return_map(scene).lambda;
  {
    // refine lambda from the deepest curvature products themselves: the
    // finite-difference return-map eigenvalues are only ~1e-6 accurate,
    // which would leak a linear drift into Lambda / lambda^r
    Story deep, deeper;
    for (int b = 0; b < r_max; ++b) {
      if (b < r_max - 1) {
        deep.push_back(2);
        deep.push_back(1);
      }
      deeper.push_back(2);
      deeper.push_back(1);
    }
    const Vec3 m = scene.midpoint();
    const double ratio =
        curvature_product(scene, m, scene.axis(), deeper).value /
        curvature_product(scene, m, scene.axis(), deep).value;
    if (std::abs(ratio / report.lambda - 1.0) > 1e-3)
      throw ComputeError("convergence_check: period ratio far from lambda");
    report.lambda = ratio;
  }

  // sample points in the inter-obstacle region
  std::vector<Vec3> samples;
  const Vec3 mid = scene.midpoint();
  const TangentFrame tf = scene.transverse_frame();
  samples.push_back(mid);
  samples.push_back(mid - 0.2 * scene.axis());
  samples.push_back(mid + 0.2 * scene.axis());
  samples.push_back(mid + 0.05 * tf.t1);
  samples.push_back(mid + 0.05 * tf.t2);

  struct Pattern {
    std::string label;
    int first;  // obstacle of the opening reflection
    Story tail;
  };
  const std::vector<Pattern> patterns = {
      {"I=(2,1), l=empty", 2, {}},
      {"I=(2,1), l={2}", 2, {2}},
      {"I=(1,2), l=empty", 1, {}},
      {"I=(1,2), l={1}", 1, {1}},
  };

  for (const auto& pat : patterns) {
    // the (2,1,...) family is admissible for +e incidence, (1,2,...) for -e
    const Vec3 xi = pat.first == 2 ? scene.axis() : Vec3(-scene.axis());
    PatternReport pr;
    pr.label = pat.label;
    std::vector<std::vector<double>> per_sample(samples.size());
    for (int r = 1; r <= r_max; ++r) {
      Story j;
      for (int b = 0; b < r; ++b) {
        j.push_back(pat.first);
        j.push_back(pat.first == 2 ? 1 : 2);
      }
      for (int tailb : pat.tail) j.push_back(tailb);
      double sup = 0.0;
      for (size_t si = 0; si < samples.size(); ++si) {
        const double v = curvature_product(scene, samples[si], xi, j).value /
                         std::pow(report.lambda, r);
        per_sample[si].push_back(v);
        sup = std::max(sup, v);
      }
      pr.values.push_back(sup);
    }
    // limit estimate from the deepest repetition; geometric rate of the
    // sup-residue against it
    double a = 0.0;
    for (auto& vs : per_sample) a += vs.back();
    pr.a_est = a / static_cast<double>(samples.size());
    std::vector<double> js, res;
    // residues at the level of the shooting solve's own noise say nothing
    // about the rate; keep only the ones the geometry still controls
    const double floor = 1e-9 * std::max(1.0, std::abs(pr.a_est));
    for (int r = 1; r <= r_max - 2; ++r) {
      double sup = 0.0;
      for (auto& vs : per_sample)
        sup = std::max(sup, std::abs(vs[r - 1] - vs.back()));
      if (sup > floor) {
        js.push_back(2.0 * r + static_cast<double>(pat.tail.size()));
        res.push_back(sup);
      }
    }
    if (js.size() >= 3) {
      const LineFit fit = fit_exponential(js, res);
      pr.alpha = std::exp(fit.slope);
      pr.r_squared = fit.r_squared;
      pr.geometric = fit.r_squared >= 0.8;
    } else if (!res.empty()) {
      // contraction hit the numerical floor within a couple of repetitions
      pr.alpha = res.size() == 2
                     ? std::exp(std::log(res[1] / res[0]) / (js[1] - js[0]))
                     : std::pow(res[0], 1.0 / js[0]);
      pr.r_squared = 1.0;
      pr.geometric = true;
    } else {
      pr.geometric = false;
    }
    report.patterns.push_back(pr);
  }
  return report;
}

StoryCensus story_census(const Scene& scene, double t_max, const SymbolFn& q) {
  if (!q) throw ComputeError("story_census: empty symbol");
  if (t_max <= 0.0 || t_max > 50.0 * scene.gap())
    throw ComputeError("story_census: t_max out of range");

  // chi_0 localization: inter-obstacle points away from the boundaries
  std::vector<Vec3> samples;
  const Vec3 mid = scene.midpoint();
  const TangentFrame tf = scene.transverse_frame();
  const double half = 0.5 * scene.gap() - 0.2 * scene.gap();
  for (double a : {-1.0, -0.5, 0.0, 0.5, 1.0})
    for (double u : {0.0, 0.1})
      samples.push_back(mid + a * half * scene.axis() + u * tf.t1);

  const double dt = 0.2;
  const int nt = static_cast<int>(std::floor(t_max / dt)) + 1;
  const int len_cap =
      static_cast<int>(std::ceil(t_max / scene.gap())) + 2;

  struct Window {
    int length;
    double t_lo = -1.0, t_hi = -1.0;
    std::vector<bool> active;
  };
  std::vector<Window> windows;

  // story families: (2,1,...) rides the +axis incidence, (1,2,...) the -axis
  for (int family = 0; family < 2; ++family) {
    const int first = family == 0 ? 2 : 1;
    const Vec3 xi = first == 2 ? scene.axis() : Vec3(-scene.axis());
    Story j;
    for (int n = 0; n <= len_cap; ++n) {
      if (n > 0) {
        const int prev = j.empty() ? (first == 2 ? 1 : 2) : j.back();
        j.push_back(prev == 1 ? 2 : 1);
      }
      if (family == 1 && n == 0) continue;  // count the empty story once
      Window w;
      w.length = n;
      w.active.assign(nt, false);
      for (const Vec3& x : samples) {
        std::vector<RayLeg> legs;
        if (n > 0) {
          try {
            legs = phase_ray(
                scene, PhaseQuery{x, xi, j, far_source(scene, xi)});
          } catch (const ComputeError&) {
            continue;
          }
        }
        for (int it = 0; it < nt; ++it) {
          const double t = it * dt;
          const double val = n == 0 ? 0.5 * q(x - t * xi, xi)
                                    : w0_from_legs(legs, t, xi, q);
          if (std::abs(val) > 1e-14) w.active[it] = true;
        }
      }
      for (int it = 0; it < nt; ++it) {
        if (!w.active[it]) continue;
        if (w.t_lo < 0.0) w.t_lo = it * dt;
        w.t_hi = it * dt;
      }
      windows.push_back(std::move(w));
    }
  }

  StoryCensus census;
  census.c1 = std::numeric_limits<double>::infinity();
  census.c2 = 0.0;
  for (const auto& w : windows) {
    if (w.t_lo < 0.0) continue;
    if (w.length > 0)
      census.c1 = std::min(census.c1, w.t_lo / w.length);
    census.c2 = std::max(census.c2, w.t_hi / (w.length + 1.0));
  }
  if (!std::isfinite(census.c1)) census.c1 = 0.0;

  std::vector<double> ts, counts;
  for (int it = 0; it < nt; ++it) {
    CensusRow row;
    row.t = it * dt;
    for (const auto& w : windows)
      if (w.active[it]) ++row.count;
    census.rows.push_back(row);
    ts.push_back(row.t);
    counts.push_back(static_cast<double>(row.count));
  }
  const LineFit fit = fit_line(ts, counts);
  census.slope = fit.slope;
  census.intercept = fit.intercept;
  return census;
}

}  // namespace biscat
