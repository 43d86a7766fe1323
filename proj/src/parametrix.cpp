#include "biscat/parametrix.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>

#include "biscat/billiard.hpp"
#include "biscat/fitting.hpp"
#include "biscat/trapped_set.hpp"

namespace biscat {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kDim = 3;

double smoothstep5(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return x * x * x * (10.0 + x * (-15.0 + 6.0 * x));
}

/// Alternating story of the given length starting on body `first`.
Story alternating_story(int first, int len) {
  Story J(len);
  for (int i = 0; i < len; ++i) J[i] = (i % 2 == 0) ? first : 3 - first;
  return J;
}

/// Gauss-Legendre with node doubling until 1e-8 relative stability.
template <typename F>
auto gl_adaptive(const F& f, double a, double b, const char* what) {
  using R = decltype(f(a));
  std::vector<double> xs, ws;
  R prev{};
  for (int n = 64; n <= 1 << 17; n *= 2) {
    gauss_legendre(n, a, b, xs, ws);
    R acc{};
    for (int i = 0; i < n; ++i) acc += ws[i] * f(xs[i]);
    if (n > 64 &&
        std::abs(acc - prev) <= 1e-8 * std::max(1.0, std::abs(acc)))
      return acc;
    prev = acc;
  }
  throw ComputeError(std::string(what) +
                     ": radial quadrature did not converge; shrink the "
                     "shell or lower the frequency range");
}

/// e^{-i theta} with theta reduced modulo 2 pi in extended precision;
/// theta can reach ~t/h where plain double loses the fractional cycle.
std::complex<double> osc_minus(long double theta) {
  const long double two_pi = 6.28318530717958647692L;
  const double r = static_cast<double>(std::fmod(theta, two_pi));
  return {std::cos(r), -std::sin(r)};
}

struct DirSample {
  double phi = 0.0;  // phi_J(x, d) for |d| = 1
  Vec3 b1;
  double l_J = 0.0;
};

DirSample sample_dir(const Scene& scene, const Vec3& x, const Vec3& y,
                     const Story& J, const Vec3& d) {
  WavefrontSample ws = evaluate_phase(scene, PhaseQuery{x, d, J, y});
  return {ws.phase, ws.b1, ws.l_J};
}

/// 4th-order central differences of F(xi) = |xi| phi_J(x, xi/|xi|) at xi0.
Mat3 fd_hessian(const Scene& scene, const Vec3& x, const Vec3& y,
                const Story& J, const Vec3& xi0, double step) {
  const auto F = [&](const Vec3& xi) {
    const double n = xi.norm();
    return n * sample_dir(scene, x, y, J, xi / n).phi;
  };
  Mat3 H;
  const double f0 = F(xi0);
  for (int i = 0; i < 3; ++i) {
    const Vec3 ei = step * Vec3::Unit(i);
    H(i, i) = (-F(xi0 + 2 * ei) + 16 * F(xi0 + ei) - 30 * f0 +
               16 * F(xi0 - ei) - F(xi0 - 2 * ei)) /
              (12 * step * step);
    for (int j = i + 1; j < 3; ++j) {
      const Vec3 ej = step * Vec3::Unit(j);
      const double c1 = F(xi0 + ei + ej) - F(xi0 + ei - ej) -
                        F(xi0 - ei + ej) + F(xi0 - ei - ej);
      const double c2 = F(xi0 + 2 * (ei + ej)) - F(xi0 + 2 * (ei - ej)) -
                        F(xi0 - 2 * (ei - ej)) + F(xi0 - 2 * (ei + ej));
      H(i, j) = H(j, i) = (16.0 * c1 - c2) / (48.0 * step * step);
    }
  }
  return H;
}

}  // namespace

double shell_window(double s, double alpha0, double beta0) {
  const double margin = 0.1 * (beta0 - alpha0);
  return smoothstep5((s - alpha0) / margin) *
         smoothstep5((beta0 - s) / margin);
}

ParametrixConfig parametrix_config(const Scene& scene, ParametrixConfig cfg) {
  if (!(cfg.alpha0 > 0.0 && cfg.alpha0 < cfg.beta0))
    throw ComputeError("parametrix_config: need 0 < alpha0 < beta0");
  if (!(cfg.h > 0.0 && cfg.h < 0.5))
    throw ComputeError("parametrix_config: need 0 < h < 1/2");
  if (cfg.eps <= 0.0) throw ComputeError("parametrix_config: need eps > 0");
  if (cfg.k0 < 0 || cfg.k0 > 1)
    throw ComputeError("parametrix_config: transport order k0 must be 0 or 1");
  if (cfg.eta <= 0.0) cfg.eta = 0.1 * scene.gap();
  if (cfg.c_est <= 0.0) {
    const ReturnMapAnalysis rm = return_map(scene);
    cfg.c_est = std::log(rm.mu_max) / rm.period;
  }
  if (2.0 * cfg.c_est * cfg.eps > 0.5)
    throw ComputeError(
        "parametrix_config: 2 c_est eps exceeds 1/2; shrink eps");
  remainder_budget(cfg);  // throws when K is under the budget
  if (cfg.x_grid.empty()) {
    const Vec3 mid = scene.midpoint();
    const Vec3 e = scene.axis();
    const TangentFrame& f = scene.transverse_frame();
    for (double u : {-0.6, -0.3, 0.0, 0.3, 0.6})
      for (const Vec3& v :
           {Vec3(Vec3::Zero()), Vec3(0.3 * f.t1), Vec3(-0.3 * f.t1),
            Vec3(0.3 * f.t2), Vec3(-0.3 * f.t2)})
        cfg.x_grid.push_back(mid + u * e + v);
  }
  if (cfg.t_grid.empty())
    for (int t = 2; t <= 12; ++t) cfg.t_grid.push_back(t);
  return cfg;
}

StationaryPhaseData critical_point(const Scene& scene, const Vec3& x,
                                   const Vec3& y, const Story& J, double s,
                                   int sign, double eta) {
  if (s <= 0.0) throw ComputeError("critical_point: shell radius must be > 0");
  if (eta <= 0.0) eta = 0.1 * scene.gap();
  StationaryPhaseData out;
  out.J = J;
  out.sign = sign >= 0 ? +1 : -1;
  out.s = s;

  if (J.empty()) {
    const Vec3 rel = x - y;
    const double r = rel.norm();
    if (r < eta)
      throw ComputeError(
          "critical_point: backward endpoint inside the near-source "
          "exclusion");
    const Vec3 d = rel / r;
    out.xi = s * out.sign * d;
    out.b1 = x;
    out.l_J = 0.0;
    out.phase = s * r;  // S = (x - y) . xi at xi = s d
    out.two_lambda = r / s;
    out.hessian = -(r / s) * Mat2::Identity();
    out.det = (r * r) / (s * s);
    out.residual = 0.0;
    out.degenerate = out.det < 1e-8;
    return out;
  }

  // Fixed point for the parallelism condition b1 - y parallel to d over
  // the physical incident direction: d <- normalize(b1(d) - y). The
  // backward endpoint moves slowly with the aim (hyperbolic contraction
  // along the story), so the re-aiming map contracts the angle error;
  // evaluate_phase keeps the forward-launch branch, which is exactly the
  // positive-inner-product selection.
  const std::vector<Vec3> seeds = {
      (scene.body(J.front()).centroid() - y).normalized(),
      (scene.midpoint() - y).normalized(), (x - y).normalized()};
  bool solved = false;
  Vec3 d_best;
  DirSample smp_best;
  double res_best = 0.0;
  for (const Vec3& seed : seeds) {
    Vec3 d = seed;
    for (int iter = 0; iter < 120; ++iter) {
      DirSample smp;
      try {
        smp = sample_dir(scene, x, y, J, d);
      } catch (const ComputeError&) {
        break;  // off the domain of phi_J: try the next seed
      }
      const Vec3 rel = smp.b1 - y;
      const double res = (rel - rel.dot(d) * d).norm();
      if (res < 1e-11) {
        solved = true;
        d_best = d;
        smp_best = smp;
        res_best = res;
        break;
      }
      const double rn = rel.norm();
      if (rn < 1e-12) break;
      d = rel / rn;
    }
    if (solved) break;
  }
  if (!solved)
    throw ComputeError(
        "critical_point: no chart seed converged; x outside the domain of "
        "phi_J or the story unreachable from y");

  if ((smp_best.b1 - y).norm() < eta)
    throw ComputeError(
        "critical_point: backward endpoint inside the near-source exclusion");

  out.xi = s * out.sign * d_best;
  out.b1 = smp_best.b1;
  out.l_J = smp_best.l_J;
  out.phase = s * smp_best.phi;
  out.two_lambda = smp_best.phi / s;
  out.residual = res_best;

  // Restricted Hessian by the Lagrange rule: project D^2 F - 2 lambda Id
  // onto the tangent plane at the critical point; F(xi) = |xi| phi_J.
  const Vec3 xi_plus = s * d_best;
  const Mat3 HF = fd_hessian(scene, x, y, J, xi_plus, 1e-3 * s);
  const TangentFrame tf = orthonormal_frame(d_best);
  const Mat3 M = HF - out.two_lambda * Mat3::Identity();
  out.hessian(0, 0) = tf.t1.dot(M * tf.t1);
  out.hessian(0, 1) = out.hessian(1, 0) = tf.t1.dot(M * tf.t2);
  out.hessian(1, 1) = tf.t2.dot(M * tf.t2);
  out.det = out.hessian.determinant();
  out.degenerate = out.det < 1e-8;
  return out;
}

double free_term_value(const ParametrixConfig& cfg, double r, double t) {
  if (r <= 0.0) throw ComputeError("free_term_value: need r > 0");
  const double h = cfg.h;
  const double integral = gl_adaptive(
      [&](double s) {
        return s * shell_window(s, cfg.alpha0, cfg.beta0) *
               std::sin(s * r / h) * std::cos(t * s / h);
      },
      cfg.alpha0, cfg.beta0, "free_term");
  return integral / (2.0 * kPi * kPi * h * h * r);
}

double free_term_sup(const ParametrixConfig& cfg, double t) {
  // the non-oscillatory beat sits at |r - t| of order h: sample the light
  // cone window at spacing h/8. The ball r < eta is excluded as in the
  // reflected sum: the finitely smooth shell window leaves a residual
  // h^-3 (h/t)^3 tail at the source that is not part of the front
  const double lo = std::max(t - 2.0, cfg.eta > 0.0 ? cfg.eta : 1e-3);
  const double hi = t + 2.0;
  const int n = std::max(257, static_cast<int>((hi - lo) / (cfg.h / 8.0)));
  double best = 0.0;
#pragma omp parallel for reduction(max : best) schedule(dynamic)
  for (int i = 0; i <= n; ++i) {
    const double r = lo + (hi - lo) * i / n;
    best = std::max(best, std::abs(free_term_value(cfg, r, t)));
  }
  return best;
}

DecayCurve free_term(const ParametrixConfig& cfg) {
  DecayCurve curve;
  for (double t : cfg.t_grid) {
    if (t < 2.0) continue;  // the dispersive fit needs t away from 0
    curve.t.push_back(t);
    curve.sup.push_back(free_term_sup(cfg, t));
  }
  if (curve.t.size() < 2)
    throw ComputeError("free_term: need at least two t >= 2 grid points");
  const LineFit pw = fit_power_law(curve.t, curve.sup);
  curve.p_hat = -pw.slope;
  curve.r_squared_power = pw.r_squared;
  const LineFit ex = fit_exponential(curve.t, curve.sup);
  curve.nu_hat = -ex.slope;
  curve.r_squared_exp = ex.r_squared;
  return curve;
}

double free_term_brute(const ParametrixConfig& cfg, double r, double t,
                       int n_radial, int n_theta, int n_phi) {
  // full spherical-coordinate quadrature with the separation axis held
  // oblique to the grid axis, so no symmetry of the reduced formula enters
  const Vec3 e = Vec3(0.2, 0.3, 0.93).normalized();
  const double h = cfg.h;
  std::vector<double> xs, wxs, us, wus;
  gauss_legendre(n_radial, cfg.alpha0, cfg.beta0, xs, wxs);
  gauss_legendre(n_theta, -1.0, 1.0, us, wus);
  double total = 0.0;
  for (int i = 0; i < n_radial; ++i) {
    const double s = xs[i];
    const double radial =
        wxs[i] * s * s * shell_window(s, cfg.alpha0, cfg.beta0) *
        std::cos(t * s / h);
    if (radial == 0.0) continue;
    double shell = 0.0;
    for (int j = 0; j < n_theta; ++j) {
      const double u = us[j];
      const double st = std::sqrt(std::max(0.0, 1.0 - u * u));
      double ring = 0.0;
      for (int m = 0; m < n_phi; ++m) {
        const double phi = 2.0 * kPi * m / n_phi;
        const Vec3 omega(st * std::cos(phi), st * std::sin(phi), u);
        ring += std::cos(r * s * e.dot(omega) / h);
      }
      shell += wus[j] * ring * (2.0 * kPi / n_phi);
    }
    total += radial * shell;
  }
  return total / std::pow(2.0 * kPi * h, 3);
}

namespace {

struct StoryTerm {
  Story J;
  StationaryPhaseData sp;  // radius-1 solve
  Vec3 dir;                // unit incident direction
};

std::vector<StoryTerm> solve_stories(const Scene& scene,
                                     const ParametrixConfig& cfg,
                                     const Vec3& x, int max_len,
                                     DecayCurve& tally) {
  std::vector<StoryTerm> terms;
  for (int first : {1, 2}) {
    for (int len = 1; len <= max_len; ++len) {
      const Story J = alternating_story(first, len);
      StationaryPhaseData sp;
      try {
        sp = critical_point(scene, x, cfg.y, J, 1.0, +1, cfg.eta);
      } catch (const ComputeError& err) {
        if (std::string(err.what()).find("near-source") != std::string::npos)
          ++tally.near_source;
        continue;  // x outside the domain of phi_J: no contribution
      }
      ++tally.contributions;
      if (sp.degenerate || sp.det <= 0.0) {
        ++tally.excluded;
        continue;
      }
      terms.push_back({J, sp, sp.xi.normalized()});
    }
  }
  return terms;
}

std::complex<double> assemble_point(const Scene& scene,
                                    const ParametrixConfig& cfg,
                                    const SymbolFn& q, const Vec3& x, double t,
                                    const std::vector<StoryTerm>& terms,
                                    int max_len) {
  const double h = cfg.h;
  const std::complex<double> I(0.0, 1.0);
  std::complex<double> sum(0.0, 0.0);
  for (const StoryTerm& term : terms) {
    if (static_cast<int>(term.J.size()) > max_len) continue;
    const double inv_sqrt_det = 1.0 / std::sqrt(term.sp.det);
    for (int k = 0; k <= std::min(cfg.k0, 1); ++k) {
      const double wk = amplitude_eval(scene, TermSpec{term.J, +1, k}, x, t,
                                       term.dir, q);
      if (wk == 0.0) continue;
      const double phi = term.sp.phase;  // radius-1 phase value phi_J
      const auto integrand = [&](double s) -> std::complex<double> {
        // H(s) = H(1)/s on the radius-s sphere: |det|^{-1/2} = s/sqrt(det1)
        std::complex<double> g =
            s * inv_sqrt_det * shell_window(s, cfg.alpha0, cfg.beta0) *
            osc_minus(static_cast<long double>(s) *
                      (static_cast<long double>(phi) -
                       static_cast<long double>(t)) /
                      static_cast<long double>(h));
        if (k == 1) g *= -I * h / s;
        return g;
      };
      const std::complex<double> radial =
          gl_adaptive(integrand, cfg.alpha0, cfg.beta0, "reflected_sum");
      // 2-D stationary phase of e^{-iS/h} on the negative-definite
      // Hessian: prefactor 2 pi h e^{+i pi/2}
      sum += (2.0 * kPi * h) / std::pow(2.0 * kPi * h, kDim) * I * wk * radial;
    }
  }
  return sum;
}

}  // namespace

double reflected_value(const Scene& scene, const ParametrixConfig& cfg,
                       const SymbolFn& q, const Vec3& x, double t, double c1,
                       double story_cap_scale, DecayCurve& tally) {
  if (c1 <= 0.0) throw ComputeError("reflected_value: need c1 > 0");
  const int max_len = std::max(
      1, static_cast<int>(std::floor(story_cap_scale * t / c1)));
  const std::vector<StoryTerm> terms =
      solve_stories(scene, cfg, x, max_len, tally);
  // both wave signs together: the minus family is the complex conjugate
  return 2.0 * assemble_point(scene, cfg, q, x, t, terms, max_len).real();
}

DecayCurve reflected_sum(const Scene& scene, const ParametrixConfig& cfg,
                         const StoryCensus& census, double story_cap_scale) {
  if (census.c1 <= 0.0)
    throw ComputeError("reflected_sum: story census lacks a positive c1");
  const double t_max =
      *std::max_element(cfg.t_grid.begin(), cfg.t_grid.end());
  const int global_len = std::max(
      1, static_cast<int>(std::floor(story_cap_scale * t_max / census.c1)));
  const SymbolFn q = [cut = build_cutoff(scene, cfg.eps, cfg.h, cfg.alpha0,
                                         cfg.beta0, cfg.c_est)](
                         const Vec3& x, const Vec3& xi) { return cut(x, xi); };

  DecayCurve curve;
  curve.t = cfg.t_grid;
  curve.sup.assign(cfg.t_grid.size(), 0.0);
  for (const Vec3& x : cfg.x_grid) {
    const std::vector<StoryTerm> terms =
        solve_stories(scene, cfg, x, global_len, curve);
    for (size_t it = 0; it < cfg.t_grid.size(); ++it) {
      const double t = cfg.t_grid[it];
      const int max_len = std::max(
          1,
          static_cast<int>(std::floor(story_cap_scale * t / census.c1)));
      const double v =
          2.0 * assemble_point(scene, cfg, q, x, t, terms, max_len).real();
      curve.sup[it] = std::max(curve.sup[it], std::abs(v));
    }
  }

  // The radial integral only survives where |phi_J(x) - t| is of order h,
  // so each story's front is a shell far thinner than any fixed grid. Track
  // the fronts along the axial section: interpolate phi_J(u) = t between
  // axial stations and evaluate the crossing story where it peaks.
  const Vec3 mid = scene.midpoint();
  const Vec3 e = scene.axis();
  const int n_ax = 7;
  std::vector<double> us(n_ax);
  std::vector<std::vector<StoryTerm>> ax_terms(n_ax);
  for (int i = 0; i < n_ax; ++i) {
    us[i] = -0.6 + 1.2 * i / (n_ax - 1);
    ax_terms[i] = solve_stories(scene, cfg, mid + us[i] * e, global_len,
                                curve);
  }
  for (size_t it = 0; it < cfg.t_grid.size(); ++it) {
    const double t = cfg.t_grid[it];
    const int max_len = std::max(
        1, static_cast<int>(std::floor(story_cap_scale * t / census.c1)));
    for (int first : {1, 2}) {
      for (int len = 1; len <= max_len; ++len) {
        const Story J = alternating_story(first, len);
        // phi_J per axial station, where the story solved
        std::vector<double> uu, pp;
        for (int i = 0; i < n_ax; ++i)
          for (const StoryTerm& term : ax_terms[i])
            if (term.J == J) {
              uu.push_back(us[i]);
              pp.push_back(term.sp.phase);
            }
        for (size_t i = 0; i + 1 < uu.size(); ++i) {
          if ((pp[i] - t) * (pp[i + 1] - t) > 0.0) continue;
          const double w = pp[i + 1] != pp[i]
                               ? (t - pp[i]) / (pp[i + 1] - pp[i])
                               : 0.5;
          const Vec3 xf = mid + (uu[i] + w * (uu[i + 1] - uu[i])) * e;
          std::vector<StoryTerm> front;
          try {
            StationaryPhaseData sp =
                critical_point(scene, xf, cfg.y, J, 1.0, +1, cfg.eta);
            ++curve.contributions;
            if (sp.degenerate || sp.det <= 0.0) {
              ++curve.excluded;
              continue;
            }
            front.push_back({J, sp, sp.xi.normalized()});
          } catch (const ComputeError& err) {
            if (std::string(err.what()).find("near-source") !=
                std::string::npos)
              ++curve.near_source;
            continue;
          }
          const double v =
              2.0 *
              assemble_point(scene, cfg, q, xf, t, front, max_len).real();
          curve.sup[it] = std::max(curve.sup[it], std::abs(v));
        }
      }
    }
  }
  if (curve.excluded > 0 &&
      curve.excluded * 100 > curve.contributions)
    throw ComputeError(
        "reflected_sum: degenerate stationary points exceed 1% of the "
        "retained contributions");
  std::vector<double> ts, vs;
  for (size_t i = 0; i < curve.t.size(); ++i)
    if (curve.sup[i] > 0.0) {
      ts.push_back(curve.t[i]);
      vs.push_back(curve.sup[i]);
    }
  if (ts.size() >= 2) {
    const LineFit ex = fit_exponential(ts, vs);
    curve.nu_hat = -ex.slope;
    curve.r_squared_exp = ex.r_squared;
    const LineFit pw = fit_power_law(ts, vs);
    curve.p_hat = -pw.slope;
    curve.r_squared_power = pw.r_squared;
  }
  return curve;
}

int minimal_remainder_order(int d) {
  // smallest K with K/2 - 3d - 1 >= -(d+1)/2 + 1
  return static_cast<int>(std::ceil(2.0 * (3.0 * d + 2.0 - (d + 1) / 2.0)));
}

RemainderBudget remainder_budget(const ParametrixConfig& cfg) {
  if (cfg.c_est <= 0.0)
    throw ComputeError(
        "remainder_budget: c_est not set; fill the configuration first");
  const int d = kDim;
  const double ce = cfg.c_est * cfg.eps;
  RemainderBudget rb;
  rb.exponent = cfg.K * (1.0 - 2.0 * ce) - d * (2.0 + ce);
  rb.simplified = cfg.K / 2.0 - 3.0 * d - 1.0;
  rb.required = -(d + 1) / 2.0 + 1.0;
  rb.minimal_K = minimal_remainder_order(d);
  rb.satisfied = rb.simplified >= rb.required && 2.0 * ce <= 0.5;
  if (!rb.satisfied)
    throw ComputeError("remainder_budget: K = " + std::to_string(cfg.K) +
                       " misses the sufficiency condition; use K >= " +
                       std::to_string(rb.minimal_K));
  const double amp = std::pow(cfg.h, -(d + 1) / 2.0);
  const double t_end = cfg.eps * std::abs(std::log(cfg.h));
  const int n = 33;
  for (int i = 0; i <= n; ++i) {
    const double t = t_end * i / n;
    rb.t.push_back(t);
    rb.bound.push_back(amp * std::exp(-t / cfg.eps));
  }
  return rb;
}

}  // namespace biscat
