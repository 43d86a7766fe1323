#include <random>

#include "biscat/geometry.hpp"
#include "doctest.h"

using namespace biscat;

namespace {

// independent quadratic-root oracle for axis-aligned quadrics
double quadric_first_root(const Vec3& coeffs, const Vec3& center,
                          const Vec3& o, const Vec3& d) {
  double a = 0, b = 0, c = -1;
  for (int i = 0; i < 3; ++i) {
    double q = 1.0 / (coeffs[i] * coeffs[i]);
    a += q * d[i] * d[i];
    b += q * d[i] * (o[i] - center[i]);
    c += q * (o[i] - center[i]) * (o[i] - center[i]);
  }
  double disc = b * b - a * c;
  if (disc < 0) return -1;  // miss
  return (-b - std::sqrt(disc)) / a;
}

}  // namespace

TEST_CASE("ray_intersect on the unit sphere") {
  auto body = ConvexBody::sphere(Vec3::Zero(), 1.0);
  auto hit = body.ray_intersect(Vec3(3, 0, 0), Vec3(-1, 0, 0));
  REQUIRE(hit.has_value());
  CHECK((hit->point - Vec3(1, 0, 0)).norm() < 1e-12);
  CHECK(hit->travel == doctest::Approx(2.0).epsilon(1e-12));
  CHECK((hit->normal - Vec3(1, 0, 0)).norm() < 1e-12);
  CHECK((hit->shape_operator - Mat2::Identity()).norm() < 1e-12);

  CHECK_FALSE(body.ray_intersect(Vec3(3, 0, 0), Vec3(1, 0, 0)).has_value());
}

TEST_CASE("ray_intersect on an ellipsoid matches the quadric oracle") {
  Vec3 axes(2, 1, 1);
  auto body = ConvexBody::ellipsoid(Vec3::Zero(), axes);
  auto hit = body.ray_intersect(Vec3(5, 0, 0), Vec3(-1, 0, 0));
  REQUIRE(hit.has_value());
  CHECK((hit->point - Vec3(2, 0, 0)).norm() < 1e-12);
  CHECK(hit->travel == doctest::Approx(3.0).epsilon(1e-12));
  CHECK((hit->normal - Vec3(1, 0, 0)).norm() < 1e-12);

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 50; ++i) {
    Vec3 o(6 + u(rng), 3 * u(rng), 3 * u(rng));
    Vec3 d = (Vec3(-1 + 0.2 * u(rng), 0.3 * u(rng), 0.3 * u(rng))).normalized();
    auto h = body.ray_intersect(o, d);
    double t = quadric_first_root(axes, Vec3::Zero(), o, d);
    if (t <= 0) {
      CHECK_FALSE(h.has_value());
      continue;
    }
    REQUIRE(h.has_value());
    CHECK(h->travel == doctest::Approx(t).epsilon(1e-10));
  }
}

TEST_CASE("implicit body intersection agrees with the analytic ellipsoid") {
  Vec3 axes(1.5, 1.0, 0.8);
  auto analytic = ConvexBody::ellipsoid(Vec3::Zero(), axes);
  ImplicitShape f;
  f.level = [axes](const Vec3& x) {
    double s = -1;
    for (int i = 0; i < 3; ++i) s += x[i] * x[i] / (axes[i] * axes[i]);
    return s;
  };
  f.interior_point = Vec3::Zero();
  f.bounding_radius = 1.6;
  ConvexBody body(std::move(f));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 20; ++i) {
    Vec3 o(4, u(rng), u(rng));
    Vec3 d = (Vec3(-1, 0.2 * u(rng), 0.2 * u(rng))).normalized();
    auto ha = analytic.ray_intersect(o, d);
    auto hi = body.ray_intersect(o, d);
    REQUIRE(ha.has_value() == hi.has_value());
    if (ha) {
      CHECK(std::abs(ha->travel - hi->travel) < 1e-9);
      CHECK((ha->normal - hi->normal).norm() < 1e-5);
      CHECK((ha->shape_operator - hi->shape_operator).norm() < 1e-3);
    }
  }
}

TEST_CASE("strict convexity margin over sampled boundary points") {
  auto body = ConvexBody::ellipsoid(Vec3(1, 2, 3), Vec3(2.0, 1.0, 0.5));
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  double min_eig = 1e300;
  for (int i = 0; i < 1000; ++i) {
    Vec3 dir = Vec3(g(rng), g(rng), g(rng)).normalized();
    auto hit = body.ray_intersect(Vec3(1, 2, 3) + 10.0 * dir, -dir);
    REQUIRE(hit.has_value());
    Eigen::SelfAdjointEigenSolver<Mat2> es(hit->shape_operator);
    min_eig = std::min(min_eig, es.eigenvalues()(0));
  }
  CHECK(min_eig > 0.0);
}

TEST_CASE("trapped ray between two spheres") {
  auto r = find_trapped_ray(ConvexBody::sphere(Vec3::Zero(), 1.0),
                            ConvexBody::sphere(Vec3(4, 0, 0), 1.0));
  CHECK((r.a1 - Vec3(1, 0, 0)).norm() < 1e-10);
  CHECK((r.a2 - Vec3(3, 0, 0)).norm() < 1e-10);
  CHECK(r.gap == doctest::Approx(2.0).epsilon(1e-12));

  auto r2 = find_trapped_ray(ConvexBody::sphere(Vec3::Zero(), 1.0),
                             ConvexBody::sphere(Vec3(0, 6, 0), 2.0));
  CHECK((r2.a1 - Vec3(0, 1, 0)).norm() < 1e-10);
  CHECK((r2.a2 - Vec3(0, 4, 0)).norm() < 1e-10);
  CHECK(r2.gap == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("trapped ray sphere-ellipsoid, axial case") {
  auto r = find_trapped_ray(
      ConvexBody::sphere(Vec3::Zero(), 1.0),
      ConvexBody::ellipsoid(Vec3(5, 0, 0), Vec3(1, 2, 2)));
  // 1-D oracle along the symmetry axis: endpoints (1,0,0) and (4,0,0)
  CHECK(r.gap == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(std::abs(r.a1.y()) < 1e-9);
  CHECK(std::abs(r.a2.y()) < 1e-9);
}

TEST_CASE("trapped ray optimality under boundary perturbations") {
  Scene scene(ConvexBody::sphere(Vec3(0.3, -0.2, 0.1), 1.2),
              ConvexBody::ellipsoid(Vec3(4, 0.5, 0), Vec3(1.0, 1.5, 1.2)));
  const auto& r = scene.trapped_ray();
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int i = 0; i < 100; ++i) {
    Vec3 p1 = scene.body(1).project_boundary(
        r.a1 + 0.05 * Vec3(g(rng), g(rng), g(rng)));
    Vec3 p2 = scene.body(2).project_boundary(
        r.a2 + 0.05 * Vec3(g(rng), g(rng), g(rng)));
    CHECK((p2 - p1).norm() >= r.gap - 1e-12);
  }
}

TEST_CASE("gauge value, gradient, homogeneity") {
  GaugeWeight sphere_gauge;  // unit sphere: gauge = euclidean norm
  CHECK(sphere_gauge.value(Vec3(0, 0, 2)) == doctest::Approx(2.0));
  CHECK((sphere_gauge.gradient(Vec3(0, 0, 2)) - Vec3(0, 0, 1)).norm() < 1e-12);

  const double eps = (1.0 + std::sqrt(3.0)) / 4.0;
  GaugeWeight g2;  // x^2 + eps y^2 + eps z^2 = 1
  g2.coeffs = Vec3(1.0, eps, eps);
  CHECK(g2.value(Vec3(1, 0, 0)) == doctest::Approx(1.0));

  std::mt19937_64 rng(23);
  std::normal_distribution<double> n;
  for (int i = 0; i < 100; ++i) {
    Vec3 x(n(rng), n(rng), n(rng));
    if (x.norm() < 1e-3) continue;
    CHECK(g2.value(2.0 * x) == doctest::Approx(2.0 * g2.value(x)).epsilon(1e-12));
    // finite-difference gradient
    Vec3 fd;
    double h = 1e-6;
    for (int k = 0; k < 3; ++k) {
      Vec3 e = Vec3::Zero();
      e[k] = h;
      fd[k] = (g2.value(x + e) - g2.value(x - e)) / (2 * h);
    }
    CHECK((fd - g2.gradient(x)).norm() < 1e-6 * (1.0 + fd.norm()));
  }
  CHECK_THROWS_AS((void)g2.gradient(Vec3::Zero()), ComputeError);
}
