#include <cmath>
#include <random>

#include "biscat/phase.hpp"
#include "doctest.h"

using namespace biscat;

namespace {

// Measure the reflected curvature operator from a 5-ray pencil: center ray
// plus four neighbors consistent with the incident curvature Q, all traced
// exactly to the mirror and reflected. Offsets/directions at the reflected
// base point give the operator by least squares.
Mat3 pencil_reflected_curvature(const ConvexBody& body, const Vec3& x0,
                                const Vec3& d, const Mat3& q, double eps) {
  auto hit0 = body.ray_intersect(x0, d);
  REQUIRE(hit0.has_value());
  const Vec3 b = hit0->point;
  const Vec3 dr = reflect_direction(d, hit0->normal);
  const TangentFrame f = orthonormal_frame(d);
  const TangentFrame fr = orthonormal_frame(dr);

  Eigen::Matrix2d zeta, omega;
  const Vec3 offs[2] = {f.t1, f.t2};
  for (int i = 0; i < 2; ++i) {
    Vec3 zplus[2], zminus[2];
    for (int s = 0; s < 2; ++s) {
      const double sg = s == 0 ? eps : -eps;
      const Vec3 start = x0 + sg * offs[i];
      const Vec3 dir = (d + q * (sg * offs[i])).normalized();
      auto h = body.ray_intersect(start, dir);
      REQUIRE(h.has_value());
      const Vec3 rdir = reflect_direction(dir, h->normal);
      (s == 0 ? zplus : zminus)[0] = h->point;
      (s == 0 ? zplus : zminus)[1] = rdir;
    }
    // central differences of hit point and reflected direction
    const Vec3 dp = (zplus[0] - zminus[0]) / (2.0 * eps);
    const Vec3 dd = (zplus[1] - zminus[1]) / (2.0 * eps);
    // transverse offset at the plane through b orthogonal to dr
    const Vec3 off = dp - dr.dot(dp) * dr;
    // the ray is a line: transport its direction deviation to the b-plane
    const Vec3 dev = dd - dr.dot(dd) * dr;
    zeta.col(i) = Vec2(fr.t1.dot(off), fr.t2.dot(off));
    omega.col(i) = Vec2(fr.t1.dot(dev), fr.t2.dot(dev));
  }
  // Q' zeta = omega
  Mat2 k = omega * zeta.inverse();
  k = 0.5 * (k + k.transpose()).eval();
  Eigen::Matrix<double, 3, 2> basis;
  basis.col(0) = fr.t1;
  basis.col(1) = fr.t2;
  return basis * k * basis.transpose();
}

}  // namespace

TEST_CASE("empty story reproduces the incident plane phase") {
  const Scene scene = Scene::standard();
  const Vec3 y(-10.0, 0.0, 0.0);
  const Vec3 xi(2.0, 0.0, 0.0);  // only the direction should matter
  const Vec3 x(1.5, 0.3, -0.2);
  const auto s = evaluate_phase(scene, {x, xi, {}, y});
  CHECK(s.phase == doctest::Approx(x.x() + 10.0).epsilon(1e-14));
  CHECK((s.grad - Vec3::UnitX()).norm() < 1e-14);
  CHECK(s.curvature.norm() == 0.0);
  CHECK(s.l_J == 0.0);
  CHECK(s.curv_product == 1.0);
}

TEST_CASE("single reflection on the axis") {
  const Scene scene = Scene::standard();
  const Vec3 y(-10.0, 0.0, 0.0);
  const PhaseQuery q{Vec3(2.0, 0.0, 0.0), Vec3::UnitX(), {2}, y};
  const auto s = evaluate_phase(scene, q);
  // 13 units from y to the front face of the second sphere, 1 unit back
  CHECK(s.phase == doctest::Approx(14.0).epsilon(1e-10));
  CHECK((s.grad + Vec3::UnitX()).norm() < 1e-9);
  CHECK((s.b1 - Vec3(3.0, 0.0, 0.0)).norm() < 1e-9);
  CHECK(s.l_J == doctest::Approx(1.0).epsilon(1e-9));
  // plane wave -> normal reflection on a unit sphere -> curvature 2,
  // transported one unit: 2/(1+2) in both principal directions
  const Mat2 k = s.curvature2(orthonormal_frame(s.grad));
  CHECK(k(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-8));
  CHECK(k(1, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-8));
  CHECK(std::abs(k(0, 1)) < 1e-8);
  CHECK(s.curvature * s.grad == Vec3::Zero());
}

TEST_CASE("eikonal equation and gradient consistency") {
  const Scene scene = Scene::standard();
  const Vec3 y(-10.0, 0.0, 0.0);
  const Vec3 xih = Vec3(1.0, 0.02, -0.01).normalized();
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> off(-0.15, 0.15);
  std::uniform_real_distribution<double> ax(1.3, 2.7);
  for (const Story& j : {Story{2}, Story{2, 1}}) {
    int tested = 0;
    for (int k = 0; k < 40 && tested < 10; ++k) {
      const Vec3 x(ax(rng), off(rng), off(rng));
      WavefrontSample s;
      try {
        s = evaluate_phase(scene, {x, xih, j, y});
      } catch (const ComputeError&) {
        continue;
      }
      ++tested;
      CHECK(s.grad.norm() == doctest::Approx(1.0).epsilon(1e-8));
      const double h = 1e-6;
      Vec3 fd;
      for (int c = 0; c < 3; ++c) {
        const auto p =
            evaluate_phase(scene, {x + h * Vec3::Unit(c), xih, j, y});
        const auto m =
            evaluate_phase(scene, {x - h * Vec3::Unit(c), xih, j, y});
        fd[c] = (p.phase - m.phase) / (2.0 * h);
      }
      CHECK((fd - s.grad).norm() < 1e-6);
    }
    CHECK(tested >= 5);
  }
}

TEST_CASE("phase is continuous across the story extension boundary") {
  // phi_{(2,1)} just after its last reflection matches phi_{(2)} at the
  // reflection point plus the short outgoing leg.
  const Scene scene = Scene::standard();
  const Vec3 y(-10.0, 0.0, 0.0);
  const Vec3 xih = Vec3(1.0, 0.015, 0.01).normalized();
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> off(-0.1, 0.1);
  int tested = 0;
  for (int k = 0; k < 60 && tested < 8; ++k) {
    // pick a point in the gap, trace phi_{(2)} backward onto the first body
    const Vec3 x(1.6 + 0.4 * off(rng), off(rng), off(rng));
    WavefrontSample s2;
    try {
      s2 = evaluate_phase(scene, {x, xih, {2}, y});
    } catch (const ComputeError&) {
      continue;
    }
    auto hit = scene.body(1).ray_intersect(x, s2.grad);
    if (!hit || hit->tangential) continue;
    const double inc = -s2.grad.dot(hit->normal);
    if (inc < 0.1) continue;
    const Vec3 b = hit->point;
    const Vec3 dir_out = reflect_direction(s2.grad, hit->normal);
    const double step = 1e-3;
    const Vec3 xq = b + step * dir_out;
    WavefrontSample s21;
    try {
      s21 = evaluate_phase(scene, {xq, xih, {2, 1}, y});
    } catch (const ComputeError&) {
      continue;
    }
    ++tested;
    const double expected = s2.phase + hit->travel + step;
    CHECK(std::abs(s21.phase - expected) < 1e-9 * scene.diameter());
    CHECK((s21.grad - dir_out).norm() < 1e-7);
  }
  CHECK(tested >= 4);
}

TEST_CASE("free propagation of wavefront curvature") {
  WavefrontSample s;
  s.x = Vec3::Zero();
  s.grad = Vec3::UnitZ();
  s.phase = 0.0;

  SUBCASE("plane front stays flat") {
    s.curvature = Mat3::Zero();
    const auto t = propagate_wavefront(s, 3.0);
    CHECK(t.curvature.norm() == 0.0);
    CHECK(t.phase == 3.0);
    CHECK((t.x - Vec3(0, 0, 3)).norm() == 0.0);
  }

  SUBCASE("spherical front follows 1/(s + tau)") {
    const TangentFrame f = orthonormal_frame(s.grad);
    const double s0 = 2.0;
    s.curvature = (1.0 / s0) * (f.t1 * f.t1.transpose() +
                                f.t2 * f.t2.transpose());
    const auto t = propagate_wavefront(s, 5.0);
    const Mat2 k = t.curvature2(f);
    CHECK(k(0, 0) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
    CHECK(k(1, 1) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
    // tube area grows like (1 + tau/s)^2; product stores the inverse ratio
    CHECK(t.curv_product ==
          doctest::Approx(1.0 / ((7.0 / 2.0) * (7.0 / 2.0))).epsilon(1e-12));
  }

  SUBCASE("semigroup property") {
    const TangentFrame f = orthonormal_frame(s.grad);
    Mat2 k0;
    k0 << 0.9, 0.2, 0.2, 0.4;
    s.curvature = f.t1 * (k0(0, 0) * f.t1 + k0(0, 1) * f.t2).transpose() +
                  f.t2 * (k0(1, 0) * f.t1 + k0(1, 1) * f.t2).transpose();
    const auto one = propagate_wavefront(propagate_wavefront(s, 1.3), 0.9);
    const auto two = propagate_wavefront(s, 2.2);
    CHECK((one.curvature - two.curvature).norm() < 1e-12);
    CHECK(one.curv_product == doctest::Approx(two.curv_product).epsilon(1e-12));
  }
}

TEST_CASE("normal incidence on a unit sphere doubles into the mirror term") {
  const ConvexBody sphere = ConvexBody::sphere(Vec3::Zero(), 1.0);
  const Vec3 x0(0.0, 0.0, 5.0);
  const Vec3 d = -Vec3::UnitZ();
  auto hit = sphere.ray_intersect(x0, d);
  REQUIRE(hit.has_value());
  const Mat3 qr = reflect_curvature(Mat3::Zero(), d, *hit);
  const TangentFrame f = orthonormal_frame(Vec3::UnitZ());
  Mat2 k;
  k(0, 0) = f.t1.dot(qr * f.t1);
  k(0, 1) = f.t1.dot(qr * f.t2);
  k(1, 0) = f.t2.dot(qr * f.t1);
  k(1, 1) = f.t2.dot(qr * f.t2);
  CHECK(k(0, 0) == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(k(1, 1) == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(std::abs(k(0, 1)) < 1e-10);
  CHECK((qr * Vec3::UnitZ()).norm() < 1e-12);
}

TEST_CASE("reflected curvature matches a finite-difference ray pencil") {
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> u(-0.45, 0.45);
  std::uniform_real_distribution<double> kap(0.0, 0.8);

  const ConvexBody bodies[] = {
      ConvexBody::sphere(Vec3(0.3, -0.2, 0.0), 1.2),
      ConvexBody::ellipsoid(Vec3::Zero(), Vec3(1.4, 1.0, 0.8))};
  for (const auto& body : bodies) {
    int tested = 0;
    for (int trial = 0; trial < 60 && tested < 12; ++trial) {
      const Vec3 x0(u(rng), u(rng), 6.0);
      const Vec3 d = (body.centroid() + Vec3(u(rng), u(rng), u(rng)) - x0)
                         .normalized();
      auto hit = body.ray_intersect(x0, d);
      if (!hit || hit->tangential) continue;
      if (-d.dot(hit->normal) < 0.25) continue;
      const TangentFrame f = orthonormal_frame(d);
      Mat2 k2;
      const double a = kap(rng), b = kap(rng), c = 0.3 * kap(rng);
      k2 << a, c, c, b;
      const Mat3 q = f.t1 * (k2(0, 0) * f.t1 + k2(0, 1) * f.t2).transpose() +
                     f.t2 * (k2(1, 0) * f.t1 + k2(1, 1) * f.t2).transpose();
      // advance the incident front to the hit point first
      Mat3 qb = q;
      {
        WavefrontSample s;
        s.x = x0;
        s.grad = d;
        s.curvature = q;
        qb = propagate_wavefront(s, hit->travel).curvature;
      }
      const Mat3 analytic = reflect_curvature(qb, d, *hit);
      const Mat3 numeric =
          pencil_reflected_curvature(body, x0, d, q, 1e-5);
      CHECK((analytic - numeric).norm() <
            1e-4 * std::max(1.0, analytic.norm()));
      // dispersing mirror keeps the front convex
      Eigen::SelfAdjointEigenSolver<Mat3> es(analytic);
      CHECK(es.eigenvalues().minCoeff() > -1e-9);
      ++tested;
    }
    CHECK(tested >= 8);
  }
}

TEST_CASE("axial curvature recursion matches the scalar mirror arithmetic") {
  // plane front launched at the midpoint: tau=1 free, +2 at each normal
  // bounce on a unit sphere, kappa -> kappa/(1+tau kappa) in between
  const Scene scene = Scene::standard();
  WavefrontSample s;
  s.x = Vec3(2.0, 0.0, 0.0);
  s.grad = Vec3::UnitX();
  s.curvature = Mat3::Zero();
  double kappa = 0.0;
  for (int bounce = 0; bounce < 6; ++bounce) {
    const int body = s.grad.x() > 0 ? 2 : 1;
    auto hit = scene.body(body).ray_intersect(s.x, s.grad);
    REQUIRE(hit.has_value());
    const double tau = hit->travel;
    s = reflect_wavefront(propagate_wavefront(s, tau), *hit);
    kappa = kappa / (1.0 + tau * kappa) + 2.0;
    const Mat2 k = s.curvature2(orthonormal_frame(s.grad));
    CHECK(k(0, 0) == doctest::Approx(kappa).epsilon(1e-9));
    CHECK(k(1, 1) == doctest::Approx(kappa).epsilon(1e-9));
    CHECK(std::abs(k(0, 1)) < 1e-9);
  }
  // the recursion has a stable fixed point: kappa* = 1 + sqrt(2) after the
  // two-unit leg and reflection (solves k = k/(1+2k) + 2)
  for (int bounce = 0; bounce < 40; ++bounce) kappa = kappa / (1.0 + 2.0 * kappa) + 2.0;
  CHECK(kappa == doctest::Approx(1.0 + std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("curvature product tracks the contracting eigenvalue per period") {
  const Scene scene = Scene::standard();
  const auto rm = return_map(scene);
  const Vec3 y(-10.0, 0.0, 0.0);
  const Vec3 x(2.0, 0.0, 0.0);
  // stories of length 2r end moving in +x at the midpoint
  double prev = 0.0;
  std::vector<double> ratios;
  Story j;
  for (int r = 1; r <= 4; ++r) {
    j.push_back(2);
    j.push_back(1);
    const auto s = evaluate_phase(scene, {x, Vec3::UnitX(), j, y});
    if (r >= 2) ratios.push_back(s.curv_product / prev);
    prev = s.curv_product;
  }
  for (double q : ratios) CHECK(q == doctest::Approx(rm.lambda).epsilon(1e-3));
}

TEST_CASE("stories that start on the near body are never admissible") {
  // incident direction +x from the left: the masked first leg toward body 1
  // reflects backward, so no launch reaches points in the gap
  const Scene scene = Scene::standard();
  const Vec3 y(-10.0, 0.0, 0.0);
  for (const Story& j : {Story{1}, Story{1, 2}}) {
    CHECK_THROWS_AS(
        evaluate_phase(scene, {Vec3(2.0, 0.05, 0.0), Vec3::UnitX(), j, y}),
        ComputeError);
  }
}

TEST_CASE("input validation") {
  const Scene scene = Scene::standard();
  const Vec3 y(-10.0, 0.0, 0.0);
  CHECK_THROWS_AS(
      evaluate_phase(scene, {Vec3(2, 0, 0), Vec3::Zero(), {2}, y}),
      ComputeError);
  CHECK_THROWS_AS(
      evaluate_phase(scene, {Vec3(2, 0, 0), Vec3::UnitX(), {2, 2}, y}),
      ComputeError);
  WavefrontSample s;
  s.grad = Vec3::UnitX();
  CHECK_THROWS_AS(propagate_wavefront(s, -1.0), ComputeError);
}

TEST_CASE("derivative growth across the story ladder stays exponential") {
  const Scene scene = Scene::standard();
  const auto table = derivative_growth_certificate(
      scene, 8, Vec3(-10.0, 0.0, 0.0), Vec3::UnitX());
  REQUIRE(table.rows.size() == 8);
  for (const auto& row : table.rows) CHECK(row.reliable);
  // second derivatives of the reflected phases saturate: the wavefront
  // curvature converges to the fixed point, so the sup stays bounded
  const double cap = 3.0 * (1.0 + std::sqrt(2.0));
  for (const auto& row : table.rows) CHECK(row.sup_dx < cap);
  CHECK(std::abs(table.slope_dx) < 0.4);
}
