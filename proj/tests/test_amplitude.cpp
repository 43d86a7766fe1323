#include <cmath>

#include "biscat/amplitude.hpp"
#include "biscat/billiard.hpp"
#include "biscat/fitting.hpp"
#include "biscat/trapped_set.hpp"
#include "doctest.h"

using namespace biscat;

namespace {

// smooth spatial bump, frequency-independent: exact transport oracle
SymbolFn gauss_bump(const Vec3& center, double width) {
  return [center, width](const Vec3& x, const Vec3&) {
    return std::exp(-(x - center).squaredNorm() / (width * width));
  };
}

double bump_transverse_laplacian(const Vec3& center, double width,
                                 const Vec3& x, const Vec3& dir) {
  // Laplacian of the bump restricted to the plane orthogonal to dir
  const Vec3 r = x - center;
  const Vec3 rp = r - r.dot(dir) * dir;
  const double s2 = width * width;
  const double val = std::exp(-r.squaredNorm() / s2);
  return val * (4.0 * rp.squaredNorm() / (s2 * s2) - 4.0 / s2);
}

}  // namespace

TEST_CASE("curvature product basics") {
  const Scene scene = Scene::standard();
  const Vec3 x(2.0, 0.0, 0.0);

  SUBCASE("empty story is the empty product") {
    const auto cp = curvature_product(scene, x, Vec3::UnitX(), {});
    CHECK(cp.value == 1.0);
    REQUIRE(cp.factors.size() == 1);
    CHECK(cp.factors[0] == 1.0);
  }

  SUBCASE("value is the product of the stored factors") {
    const auto cp = curvature_product(scene, x, Vec3::UnitX(), {2, 1, 2, 1});
    REQUIRE(cp.factors.size() == 5);
    double prod = 1.0;
    for (double f : cp.factors) prod *= f;
    CHECK(cp.value == doctest::Approx(prod).epsilon(1e-14));
    CHECK(cp.value > 0.0);
  }

  SUBCASE("periodic-block products track lambda^r") {
    // axial oracle: legs 2,2,..,2,1 with the exact curvature recursion
    // kappa -> kappa/(1+tau kappa) + 2 give Lambda/lambda^r -> ~4 at x
    const double lambda = return_map(scene).lambda;
    Story j;
    std::vector<double> ratios;
    for (int r = 1; r <= 5; ++r) {
      j.push_back(2);
      j.push_back(1);
      const auto cp = curvature_product(scene, x, Vec3::UnitX(), j);
      ratios.push_back(cp.value / std::pow(lambda, r));
      CHECK(ratios.back() > 0.3);
      CHECK(ratios.back() < 5.0);
    }
    // the prefactor settles to a constant
    CHECK(std::abs(ratios[4] - ratios[3]) < 1e-4 * ratios[3]);
  }

  SUBCASE("telescoping over story concatenation") {
    // the axial (2,1) ray passes (1,0,0) just before its last reflection:
    // dropping the last stored factor must reproduce the (2) product there
    const auto full = curvature_product(scene, x, Vec3::UnitX(), {2, 1});
    const auto prefix = curvature_product(
        scene, Vec3(1.0 + 1e-9, 0.0, 0.0), Vec3::UnitX(), {2});
    const double head = full.value / full.factors.back();
    CHECK(std::abs(head - prefix.value) < 1e-8);
  }
}

TEST_CASE("transport amplitude, empty story") {
  const Scene scene = Scene::standard();
  const Vec3 c(-3.0, 0.5, 0.0);
  const SymbolFn q = gauss_bump(c, 1.0);
  const Vec3 xi(2.0, 0.0, 0.0);

  SUBCASE("closed form w = q(x - t xi/|xi|)/2") {
    const Vec3 x(1.0, 0.3, -0.2);
    for (double t : {0.0, 1.5, 4.0}) {
      const double w =
          amplitude_eval(scene, TermSpec{{}, +1, 0}, x, t, xi, q);
      CHECK(w == doctest::Approx(0.5 * q(x - t * Vec3::UnitX(), xi))
                     .epsilon(1e-14));
      const double wm =
          amplitude_eval(scene, TermSpec{{}, -1, 0}, x, t, xi, q);
      CHECK(wm == doctest::Approx(0.5 * q(x + t * Vec3::UnitX(), xi))
                      .epsilon(1e-14));
    }
  }

  SUBCASE("the profile maximum rides the characteristic") {
    for (double t : {0.5, 2.0, 7.0}) {
      const double w = amplitude_eval(scene, TermSpec{{}, +1, 0},
                                      c + t * Vec3::UnitX(), t, xi, q);
      CHECK(w == doctest::Approx(0.5).epsilon(1e-14));
    }
  }
}

TEST_CASE("transport identity along the characteristic") {
  // along the forward ray w_0^J shrinks by exactly the tube-area factor
  // det(I + s K) built from the phase curvature -- the transport law
  const Scene scene = Scene::standard();
  const CutoffSymbol q = build_cutoff(scene, 0.5, 0.05);
  const SymbolFn qf = [&q](const Vec3& x, const Vec3& xi) { return q(x, xi); };
  const Vec3 x(1.5, 0.02, 0.01);
  const Vec3 xi = Vec3(1.0, 0.01, 0.0).normalized();
  const TermSpec term{{2, 1}, +1, 0};
  const double t0 = 3.0;
  const double w_ref = amplitude_eval(scene, term, x, t0, xi, qf);
  REQUIRE(std::abs(w_ref) > 1e-6);
  const WavefrontSample ws =
      evaluate_phase(scene, {x, xi, {2, 1}, Vec3(-10.0, 0.0, 0.0)});
  const Mat2 k2 = ws.curvature2(orthonormal_frame(ws.grad));
  for (double s : {0.05, 0.1, 0.2}) {
    const double w =
        amplitude_eval(scene, term, x + s * ws.grad, t0 + s, xi, qf);
    const double area = (Mat2::Identity() + s * k2).determinant();
    CHECK(std::abs(w * area - w_ref) < 1e-8);
  }
}

TEST_CASE("reflected amplitude vanishes before arrival and off domain") {
  const Scene scene = Scene::standard();
  const SymbolFn q = [](const Vec3&, const Vec3&) { return 1.0; };
  const Vec3 x(2.0, 0.0, 0.0);
  // the (2) signal reaches (2,0,0) after the 1-unit return leg
  CHECK(amplitude_eval(scene, TermSpec{{2}, +1, 0}, x, 0.5, Vec3::UnitX(),
                       q) == 0.0);
  CHECK(amplitude_eval(scene, TermSpec{{2}, +1, 0}, x, 1.5, Vec3::UnitX(),
                       q) != 0.0);
  // behind the last reflection: not in the domain of the reflected phase
  CHECK(amplitude_eval(scene, TermSpec{{2}, +1, 0}, Vec3(5.0, 0.0, 0.0), 3.0,
                       Vec3::UnitX(), q) == 0.0);
}

TEST_CASE("first corrector integrates the d'Alembertian") {
  const Scene scene = Scene::standard();
  const Vec3 c(-2.0, 0.4, -0.1);
  const double width = 1.2;
  const SymbolFn q = gauss_bump(c, width);
  const Vec3 xi = Vec3::UnitX();
  const Vec3 x(0.5, 0.6, 0.1);
  const double t = 2.5;

  // for a pure transport profile Box w_0 = -(transverse Laplacian of q)/2
  // evaluated at the foot of the characteristic, which is independent of
  // the integration variable: w_1 = (t/2) lap_perp q(x - t e1)
  const double oracle =
      0.5 * t * bump_transverse_laplacian(c, width, x - t * xi, xi);
  const double w1 =
      amplitude_eval(scene, TermSpec{{}, +1, 1}, x, t, xi, q, 1e-3);
  CHECK(w1 == doctest::Approx(oracle).epsilon(1e-5));

  CHECK_THROWS_AS(
      amplitude_eval(scene, TermSpec{{}, +1, 1}, x, t, xi, q, 1e-9),
      ComputeError);
  CHECK_THROWS_AS(
      amplitude_eval(scene, TermSpec{{}, +1, 2}, x, t, xi, q),
      ComputeError);
}

TEST_CASE("corrector of a reflected story stays finite and small") {
  const Scene scene = Scene::standard();
  const SymbolFn q = gauss_bump(Vec3(-4.0, 0.0, 0.0), 1.5);
  const double w1 = amplitude_eval(scene, TermSpec{{2}, +1, 1},
                                   Vec3(2.0, 0.1, 0.0), 9.0, Vec3::UnitX(), q,
                                   5e-3);
  CHECK(std::isfinite(w1));
}

TEST_CASE("convergence of the curvature products") {
  const Scene scene = Scene::standard();
  const auto rep = convergence_check(scene, 8);
  CHECK(rep.lambda > 0.0);
  CHECK(rep.lambda < 1.0);
  REQUIRE(rep.patterns.size() == 4);
  for (const auto& p : rep.patterns) {
    CHECK(p.a_est > 0.0);
    CHECK(p.geometric);
    CHECK(p.alpha < 1.0);
    CHECK(p.r_squared > 0.8);
  }
  // equal spheres: mirror symmetry matches the two tailed patterns
  CHECK(rep.patterns[1].a_est ==
        doctest::Approx(rep.patterns[3].a_est).epsilon(1e-6));
  CHECK(rep.patterns[0].a_est ==
        doctest::Approx(rep.patterns[2].a_est).epsilon(1e-6));

  CHECK_THROWS_AS(convergence_check(scene, 4), ComputeError);
}

TEST_CASE("asymmetric scene separates the tailed limits") {
  const Scene scene(ConvexBody::sphere(Vec3::Zero(), 1.0),
                    ConvexBody::sphere(Vec3(4.0, 0.0, 0.0), 1.3));
  const auto rep = convergence_check(scene, 8);
  REQUIRE(rep.patterns.size() == 4);
  const double a21 = rep.patterns[1].a_est;  // tail {2}
  const double a12 = rep.patterns[3].a_est;  // tail {1}
  CHECK(std::abs(a21 - a12) > 1e-3 * std::max(a21, a12));
}

TEST_CASE("summed amplitude decays exponentially in time") {
  const Scene scene = Scene::standard();
  const CutoffSymbol q = build_cutoff(scene, 0.5, 0.05);
  const SymbolFn qf = [&q](const Vec3& x, const Vec3& xi) { return q(x, xi); };

  std::vector<Vec3> samples = {scene.midpoint(),
                               scene.midpoint() - 0.4 * scene.axis(),
                               scene.midpoint() + 0.4 * scene.axis()};
  std::vector<double> ts, sums;
  for (double t = 2.0; t <= 12.0; t += 1.0) {
    double sup = 0.0;
    for (const Vec3& x : samples) {
      double sum = 0.0;
      for (int family = 0; family < 2; ++family) {
        const int first = family == 0 ? 2 : 1;
        const Vec3 xi = first == 2 ? scene.axis() : Vec3(-scene.axis());
        Story j;
        for (int n = 0; n <= 8; ++n) {
          if (n > 0)
            j.push_back(j.empty() ? first : (j.back() == 1 ? 2 : 1));
          if (family == 1 && n == 0) continue;
          sum += std::abs(
              amplitude_eval(scene, TermSpec{j, +1, 0}, x, t, xi, qf));
        }
      }
      sup = std::max(sup, sum);
    }
    if (sup > 0.0) {
      ts.push_back(t);
      sums.push_back(sup);
    }
  }
  REQUIRE(ts.size() >= 6);
  const LineFit fit = fit_exponential(ts, sums);
  CHECK(fit.slope < -0.1);  // positive decay rate
  CHECK(fit.r_squared > 0.8);
}

TEST_CASE("story census respects the support windows") {
  const Scene scene = Scene::standard();
  const CutoffSymbol q = build_cutoff(scene, 0.5, 0.05);
  const SymbolFn qf = [&q](const Vec3& x, const Vec3& xi) { return q(x, xi); };
  const auto census = story_census(scene, 12.0, qf);

  CHECK(census.c1 > 0.0);
  CHECK(std::isfinite(census.c2));
  CHECK(census.c2 > census.c1);

  // before the first bounce only the empty story contributes
  REQUIRE(!census.rows.empty());
  CHECK(census.rows[0].t == 0.0);
  CHECK(census.rows[0].count <= 1);
  bool seen_multi = false;
  for (const auto& row : census.rows) {
    CHECK(row.count >= 0);
    if (row.count > 1) seen_multi = true;
  }
  CHECK(seen_multi);
  CHECK(census.slope > 0.0);
  CHECK(std::isfinite(census.slope));

  CHECK_THROWS_AS(story_census(scene, -1.0, qf), ComputeError);
}
