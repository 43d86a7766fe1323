#include <cmath>
#include <random>

#include "biscat/morawetz.hpp"
#include "doctest.h"

using namespace biscat;

namespace {

// centered 2nd-order FD of a scalar field
double fd_partial(const std::function<double(const VecN&)>& f, const VecN& x,
                  int i, double h) {
  VecN p = x, m = x;
  p[i] += h;
  m[i] -= h;
  return (f(p) - f(m)) / (2.0 * h);
}

VecN random_point(std::mt19937_64& rng, int n, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  VecN x(n);
  for (int i = 0; i < n; ++i) x[i] = d(rng);
  return x;
}

}  // namespace

TEST_CASE("bilaplacian threshold polynomials and eps0") {
  SUBCASE("flat-shaped 4-D case") {
    const auto th = bilaplacian_threshold(4, 2);
    CHECK(th.eps0 == doctest::Approx((1.0 + std::sqrt(3.0)) / 4.0)
                         .epsilon(1e-14));
    CHECK(std::abs(th.eval_A(th.eps0)) < 1e-12);
    // A(eps) = -8 eps^2 + 4 eps + 1 in this case
    CHECK(th.eval_A(0.5) == doctest::Approx(1.0));
  }
  SUBCASE("sphere-like block gives threshold zero") {
    CHECK(bilaplacian_threshold(4, 3).eps0 == 0.0);
    CHECK(bilaplacian_threshold(5, 4).eps0 == 0.0);
  }
  SUBCASE("cigar-shaped case") {
    CHECK(bilaplacian_threshold(4, 1).eps0 == doctest::Approx(0.8));
  }
  SUBCASE("round sphere: all three polynomials vanish at eps = 1") {
    for (int n = 3; n <= 5; ++n)
      for (int k = 2; k <= n; ++k) {
        const auto th = bilaplacian_threshold(n, k);
        // A(1) carries the residual Delta^2|x| coefficient -(n-1)(n-3)
        CHECK(th.eval_A(1.0) ==
              doctest::Approx(-(n - 1.0) * (n - 3.0)).epsilon(1e-13));
        CHECK(std::abs(th.eval_B(1.0)) < 1e-12);
        CHECK(std::abs(th.eval_C(1.0)) < 1e-12);
      }
  }
  SUBCASE("rejects the undefined corner") {
    CHECK_THROWS_AS(bilaplacian_threshold(2, 2), ComputeError);
    CHECK_THROWS_AS(bilaplacian_threshold(3, 0), ComputeError);
    CHECK_THROWS_AS(bilaplacian_threshold(3, 4), ComputeError);
  }
}

TEST_CASE("gauge weight closed-form derivatives match FD") {
  std::mt19937_64 rng(31);
  for (auto [n, k, eps] : {std::tuple{3, 2, 0.7}, {4, 2, 0.9}, {4, 1, 0.85}}) {
    const Weight w = gauge_weight(n, k, eps);
    for (int trial = 0; trial < 200; ++trial) {
      const VecN x = random_point(rng, n, -2.0, 2.0);
      if (w.value(x) < 0.5) continue;
      const double h = 1e-5;
      const VecN g = w.gradient(x);
      const MatN hess = w.hessian(x);
      double lap = 0.0;
      for (int i = 0; i < n; ++i) {
        CHECK(fd_partial(w.value, x, i, h) ==
              doctest::Approx(g[i]).epsilon(1e-6));
        for (int j = 0; j < n; ++j) {
          auto gj = [&](const VecN& y) { return w.gradient(y)[j]; };
          CHECK(fd_partial(gj, x, i, h) ==
                doctest::Approx(hess(i, j)).epsilon(1e-6).scale(1.0));
        }
        lap += hess(i, i);
      }
      CHECK(w.laplacian(x) == doctest::Approx(lap).epsilon(1e-12));
    }
  }
}

TEST_CASE("bilaplacian verdicts across the threshold") {
  SUBCASE("nonpositive at and above eps0") {
    const double eps0 = bilaplacian_threshold(4, 2).eps0;
    const auto v = verify_bilaplacian(4, 2, eps0, 400, 5);
    CHECK(v.nonpositive);
    CHECK(v.fd_consistent);
    CHECK(v.samples_used == 400);
    CHECK(verify_bilaplacian(4, 2, 0.9, 400, 5).nonpositive);
  }
  SUBCASE("violated below the threshold") {
    const auto v = verify_bilaplacian(4, 2, 0.5, 400, 5);
    CHECK_FALSE(v.nonpositive);
    CHECK(v.max_value > 0.0);
  }
  SUBCASE("sphere-like 3-D gauge is nonpositive for every eps") {
    for (double eps : {0.2, 0.6, 1.0})
      CHECK(verify_bilaplacian(3, 3, eps, 300, 9).nonpositive);
  }
  SUBCASE("eps = 1 reduces to the radial formula") {
    // Delta^2 |x| = -(n-1)(n-3)/|x|^3
    std::mt19937_64 rng(17);
    for (int n : {3, 4, 5}) {
      const Weight w = gauge_weight(n, 2, 1.0);
      for (int trial = 0; trial < 50; ++trial) {
        const VecN x = random_point(rng, n, -2.0, 2.0);
        if (x.norm() < 0.5) continue;
        const double target = -(n - 1.0) * (n - 3.0) / std::pow(x.norm(), 3);
        CHECK(w.bilaplacian(x) == doctest::Approx(target).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("cylindrical lift of the gauge") {
  // d rho~/dx = (rho/rho~) d rho/dx and d rho~/dz = z/rho~
  const double eps = (1.0 + std::sqrt(3.0)) / 4.0;
  const Weight rho = gauge_weight(3, 1, eps);
  const Weight lift = cylindrical_extension(3, 1, eps);
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const VecN xz = random_point(rng, 4, -2.0, 2.0);
    const VecN x = xz.head(3);
    if (rho.value(x) < 0.3) continue;
    const double r = rho.value(x);
    const double rt = std::sqrt(r * r + xz[3] * xz[3]);
    CHECK(lift.value(xz) == doctest::Approx(rt).epsilon(1e-14));
    const VecN g = lift.gradient(xz);
    const VecN gx = rho.gradient(x);
    for (int i = 0; i < 3; ++i)
      CHECK(g[i] == doctest::Approx(r / rt * gx[i]).epsilon(1e-12));
    CHECK(g[3] == doctest::Approx(xz[3] / rt).epsilon(1e-12));
    // the lift is the 4-D gauge with one more unit direction
    CHECK(lift.bilaplacian(xz) <= 1e-10);
  }
}

TEST_CASE("two-center weight") {
  const Vec3 c(4.0, 0.0, 0.0);
  const Weight chi = two_center_weight(c);

  SUBCASE("collinear eigenvalue") {
    CHECK(two_center_lambda2(Vec3(1.0, 0.0, 0.0), c) ==
          doctest::Approx(4.0 / 3.0).epsilon(1e-14));
  }
  SUBCASE("derivatives and the vanishing bilaplacian") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> d(-6.0, 6.0);
    int used = 0;
    while (used < 200) {
      const Vec3 x(d(rng), d(rng), d(rng));
      if (x.norm() < 1.2 || (x - c).norm() < 1.2) continue;
      ++used;
      const VecN xv(x);
      const double h = 1e-4;
      for (int i = 0; i < 3; ++i)
        CHECK(fd_partial(chi.value, xv, i, h) ==
              doctest::Approx(chi.gradient(xv)[i]).epsilon(1e-6));
      // FD bilaplacian of the closed-form laplacian
      double fd = 0.0;
      for (int i = 0; i < 3; ++i) {
        auto at = [&](double s) {
          VecN y = xv;
          y[i] += s;
          return chi.laplacian(y);
        };
        fd += (-at(2 * h) + 16.0 * at(h) - 30.0 * at(0.0) + 16.0 * at(-h) -
               at(-2 * h)) /
              (12.0 * h * h);
      }
      CHECK(std::abs(fd) < 1e-6);
    }
  }
  SUBCASE("analysis report") {
    const auto rep = two_center_analysis(c, 10.0, 0.1, 4000, 77);
    CHECK(rep.lambda2_max_mismatch < 1e-10);
    CHECK(rep.samples_used == 4000);
    CHECK(rep.min_form_constant > 0.0);
    // the excluded set shrinks with alpha
    const double f1 = two_center_analysis(c, 10.0, 0.2, 4000, 77).excluded_fraction;
    const double f2 = two_center_analysis(c, 10.0, 0.1, 4000, 77).excluded_fraction;
    const double f3 = two_center_analysis(c, 10.0, 0.05, 4000, 77).excluded_fraction;
    CHECK(f1 > f2);
    CHECK(f2 > f3);
    CHECK_THROWS_AS(two_center_analysis(c, 2.0, 0.1, 100, 1), ComputeError);
  }
}

TEST_CASE("momentum-identity certificate for two balls") {
  const Scene scene = Scene::standard();
  // centers of chi sit at the two ball centers (first one at the origin)
  const Weight chi = two_center_weight(scene.body(2).centroid());
  const auto rep = flux_and_identity_certificate(chi, scene, 500, 13);
  CHECK(rep.hessian_psd);
  CHECK(rep.bilaplacian_nonpos);
  CHECK(rep.laplacian_nonneg);
  CHECK(rep.boundary_flux_nonneg);
  CHECK(rep.min_flux >= -1e-10);
  CHECK(rep.interior_samples == 500);
  CHECK(rep.boundary_samples == 1000);
}

TEST_CASE("illumination margin of a dog-bone body") {
  // peanut of revolution r = R(theta) around the x axis, pinched 30% at
  // the waist: star-shaped but not convex; boundary normals by FD of
  // F(x) = |x| - R(theta)
  const double eps = (1.0 + std::sqrt(3.0)) / 4.0;
  const Weight rho = gauge_weight(3, 1, eps);
  auto radius = [](double cos_theta) {
    return 0.5 * (1.0 - 0.3 * (1.0 - cos_theta * cos_theta));
  };
  auto level = [&](const Vec3& x) {
    const double r = x.norm();
    return r - radius(x.x() / r);
  };
  std::vector<Vec3> pts, nrm;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  while (pts.size() < 12000) {
    Vec3 d(g(rng), g(rng), g(rng));
    d.normalize();
    const Vec3 p = radius(d.x()) * d;
    Vec3 grad;
    const double h = 1e-6;
    for (int i = 0; i < 3; ++i)
      grad[i] = (level(p + h * Vec3::Unit(i)) - level(p - h * Vec3::Unit(i))) /
                (2.0 * h);
    pts.push_back(p);
    nrm.push_back(grad.normalized());
  }
  const auto rep = illumination_report(rho, pts, nrm);
  CHECK(rep.margin > 0.0);
  CHECK(rep.samples_used == static_cast<int>(pts.size()));
  CHECK_THROWS_AS(illumination_report(rho, {}, {}), ComputeError);
}

TEST_CASE("logarithmic flux factor") {
  CHECK(log_factor(1.0) ==
        doctest::Approx(2.0 * std::log(1.0 + std::sqrt(2.0))).epsilon(1e-12));
  CHECK(log_factor(1e6) / (2.0 * std::log(2e6)) ==
        doctest::Approx(1.0).epsilon(1e-6));
  double prev = 0.0;
  for (double t : {0.5, 1.0, 2.0, 5.0, 10.0}) {
    CHECK(log_factor(t) > prev);
    prev = log_factor(t);
  }
  CHECK_THROWS_AS(log_factor(0.0), ComputeError);
  CHECK_THROWS_AS(log_factor(-1.0), ComputeError);
}
