#include "biscat/geometry.hpp"

#include <cmath>

namespace biscat {

TangentFrame orthonormal_frame(const Vec3& n) {
  Vec3 a = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  Vec3 t1 = (a - a.dot(n) * n).normalized();
  Vec3 t2 = n.cross(t1);
  return {t1, t2};
}

ConvexBody::ConvexBody(EllipsoidShape e) : shape_(std::move(e)) {
  const auto& s = std::get<EllipsoidShape>(shape_);
  Mat3 d = Mat3::Zero();
  for (int i = 0; i < 3; ++i) {
    if (s.semi_axes[i] <= 0.0) throw ComputeError("ellipsoid semi-axis <= 0");
    d(i, i) = 1.0 / (s.semi_axes[i] * s.semi_axes[i]);
  }
  quad_form_ = s.orientation * d * s.orientation.transpose();
}

ConvexBody ConvexBody::sphere(const Vec3& center, double radius) {
  if (radius <= 0.0) throw ComputeError("sphere radius <= 0");
  return ConvexBody(SphereShape{center, radius});
}

ConvexBody ConvexBody::ellipsoid(const Vec3& center, const Vec3& semi_axes,
                                 const Mat3& orientation) {
  return ConvexBody(EllipsoidShape{center, semi_axes, orientation});
}

double ConvexBody::level(const Vec3& x) const {
  if (auto* s = std::get_if<SphereShape>(&shape_))
    return (x - s->center).squaredNorm() / (s->radius * s->radius) - 1.0;
  if (auto* e = std::get_if<EllipsoidShape>(&shape_)) {
    Vec3 d = x - e->center;
    return d.dot(quad_form_ * d) - 1.0;
  }
  return std::get<ImplicitShape>(shape_).level(x);
}

bool ConvexBody::contains(const Vec3& x) const { return level(x) < 0.0; }

Vec3 ConvexBody::centroid() const {
  if (auto* s = std::get_if<SphereShape>(&shape_)) return s->center;
  if (auto* e = std::get_if<EllipsoidShape>(&shape_)) return e->center;
  return std::get<ImplicitShape>(shape_).interior_point;
}

double ConvexBody::bounding_radius() const {
  if (auto* s = std::get_if<SphereShape>(&shape_)) return s->radius;
  if (auto* e = std::get_if<EllipsoidShape>(&shape_))
    return e->semi_axes.maxCoeff();
  return std::get<ImplicitShape>(shape_).bounding_radius;
}

namespace {

// level gradient by central differences, for implicit bodies
Vec3 fd_gradient(const std::function<double(const Vec3&)>& f, const Vec3& x,
                 double h) {
  Vec3 g;
  for (int i = 0; i < 3; ++i) {
    Vec3 e = Vec3::Zero();
    e[i] = h;
    g[i] = (f(x + e) - f(x - e)) / (2.0 * h);
  }
  return g;
}

}  // namespace

Vec3 ConvexBody::outward_normal(const Vec3& x) const {
  if (auto* s = std::get_if<SphereShape>(&shape_))
    return (x - s->center).normalized();
  if (auto* e = std::get_if<EllipsoidShape>(&shape_))
    return (quad_form_ * (x - e->center)).normalized();
  const auto& f = std::get<ImplicitShape>(shape_);
  return fd_gradient(f.level, x, 1e-6 * (1.0 + f.bounding_radius))
      .normalized();
}

Mat2 ConvexBody::shape_operator(const Vec3& x,
                                const TangentFrame& frame) const {
  if (auto* s = std::get_if<SphereShape>(&shape_)) {
    (void)x;
    return Mat2::Identity() / s->radius;
  }
  if (auto* e = std::get_if<EllipsoidShape>(&shape_)) {
    // level F = (x-c)^T M (x-c) - 1, Hess F = 2M, grad F = 2M(x-c):
    // II_ij = t_i^T M t_j / |M(x-c)|
    double gn = (quad_form_ * (x - e->center)).norm();
    Mat2 s2;
    s2(0, 0) = frame.t1.dot(quad_form_ * frame.t1);
    s2(0, 1) = s2(1, 0) = frame.t1.dot(quad_form_ * frame.t2);
    s2(1, 1) = frame.t2.dot(quad_form_ * frame.t2);
    return s2 / gn;
  }
  // implicit: finite differences of the normal field in the tangent plane
  const auto& f = std::get<ImplicitShape>(shape_);
  double h = 1e-5 * (1.0 + f.bounding_radius);
  auto n_at = [&](const Vec3& p) {
    return fd_gradient(f.level, p, h).normalized();
  };
  Mat2 s2;
  Vec3 d1 = (n_at(x + h * frame.t1) - n_at(x - h * frame.t1)) / (2.0 * h);
  Vec3 d2 = (n_at(x + h * frame.t2) - n_at(x - h * frame.t2)) / (2.0 * h);
  s2(0, 0) = frame.t1.dot(d1);
  s2(1, 1) = frame.t2.dot(d2);
  s2(0, 1) = s2(1, 0) = 0.5 * (frame.t1.dot(d2) + frame.t2.dot(d1));
  return s2;
}

std::optional<Hit> ConvexBody::ray_intersect(const Vec3& origin,
                                             const Vec3& dir,
                                             double tangency_tol) const {
  double t = -1.0;
  if (auto* s = std::get_if<SphereShape>(&shape_)) {
    Vec3 oc = origin - s->center;
    double b = oc.dot(dir);
    double c = oc.squaredNorm() - s->radius * s->radius;
    double disc = b * b - c;
    if (disc < 0.0) return std::nullopt;
    t = -b - std::sqrt(disc);
  } else if (auto* e = std::get_if<EllipsoidShape>(&shape_)) {
    Vec3 oc = origin - e->center;
    double a = dir.dot(quad_form_ * dir);
    double b = oc.dot(quad_form_ * dir);
    double c = oc.dot(quad_form_ * oc) - 1.0;
    double disc = b * b - a * c;
    if (disc < 0.0) return std::nullopt;
    t = (-b - std::sqrt(disc)) / a;
  } else {
    const auto& f = std::get<ImplicitShape>(shape_);
    // bracket the first root along the ray inside the bounding ball, then
    // safeguarded Newton (secant step with bisection fallback)
    Vec3 bc = f.interior_point;
    double b = (origin - bc).dot(dir);
    double c = (origin - bc).squaredNorm() - f.bounding_radius * f.bounding_radius;
    double disc = b * b - c;
    if (disc < 0.0) return std::nullopt;
    double lo = std::max(0.0, -b - std::sqrt(disc));
    double hi = -b + std::sqrt(disc);
    if (hi <= 0.0) return std::nullopt;
    auto g = [&](double tt) { return f.level(origin + tt * dir); };
    double glo = g(lo);
    if (glo < 0.0) return std::nullopt;  // origin-side endpoint inside
    const int steps = 256;
    double found = -1.0, prev = lo, gprev = glo;
    for (int i = 1; i <= steps; ++i) {
      double tt = lo + (hi - lo) * i / steps;
      double gv = g(tt);
      if (gv < 0.0) {
        // refine on [prev, tt]
        double a0 = prev, b0 = tt, ga = gprev, gb = gv;
        for (int it = 0; it < 200 && (b0 - a0) > 1e-12; ++it) {
          double m = (std::abs(gb - ga) > 1e-300)
                         ? a0 - ga * (b0 - a0) / (gb - ga)
                         : 0.5 * (a0 + b0);
          if (m <= a0 || m >= b0) m = 0.5 * (a0 + b0);
          double gm = g(m);
          if (gm > 0.0) {
            a0 = m;
            ga = gm;
          } else {
            b0 = m;
            gb = gm;
          }
        }
        found = 0.5 * (a0 + b0);
        break;
      }
      prev = tt;
      gprev = gv;
    }
    if (found < 0.0) return std::nullopt;
    t = found;
  }
  if (t <= 1e-12) return std::nullopt;

  Hit h;
  h.point = origin + t * dir;
  h.travel = t;
  h.normal = outward_normal(h.point);
  h.frame = orthonormal_frame(h.normal);
  h.shape_operator = shape_operator(h.point, h.frame);
  h.tangential = std::abs(dir.dot(h.normal)) < tangency_tol;
  return h;
}

Vec3 ConvexBody::project_boundary(const Vec3& p) const {
  if (auto* s = std::get_if<SphereShape>(&shape_))
    return s->center + s->radius * (p - s->center).normalized();
  if (auto* e = std::get_if<EllipsoidShape>(&shape_)) {
    // x - c = (I + mu M)^{-1} (p - c), mu solving level(x) = 0
    Vec3 d = p - e->center;
    double lvl = d.dot(quad_form_ * d) - 1.0;
    if (std::abs(lvl) < 1e-15) return p;
    auto val = [&](double mu) {
      Vec3 x = (Mat3::Identity() + mu * quad_form_).ldlt().solve(d);
      return x.dot(quad_form_ * x) - 1.0;
    };
    double lo = lvl > 0.0 ? 0.0 : -0.99 * e->semi_axes.minCoeff() *
                                       e->semi_axes.minCoeff();
    double hi = lvl > 0.0 ? 1.0 : 0.0;
    if (lvl > 0.0)
      while (val(hi) > 0.0) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
      double m = 0.5 * (lo + hi);
      (val(m) > 0.0 ? lo : hi) = m;
    }
    Vec3 x = (Mat3::Identity() + 0.5 * (lo + hi) * quad_form_).ldlt().solve(d);
    return e->center + x;
  }
  // implicit: from outside, march to the boundary along the chord to the
  // interior point, then slide tangentially toward p
  const auto& f = std::get<ImplicitShape>(shape_);
  Vec3 x = p;
  if (f.level(p) > 0.0) {
    Vec3 dir = (f.interior_point - p).normalized();
    auto hit = ray_intersect(p, dir);
    if (!hit) throw ComputeError("implicit projection: no boundary hit");
    x = hit->point;
  } else {
    Vec3 dir = (p - f.interior_point).normalized();
    auto hit = ray_intersect(f.interior_point - 2.0 * f.bounding_radius * dir,
                             dir);
    if (!hit) throw ComputeError("implicit projection: no boundary hit");
    x = hit->point;
  }
  for (int it = 0; it < 500; ++it) {
    Vec3 n = outward_normal(x);
    Vec3 step = (p - x) - (p - x).dot(n) * n;  // tangential pull toward p
    if (step.norm() < 1e-14) break;
    Vec3 y = x + 0.5 * step;
    // re-project onto the level set along the normal
    double h = 1e-6 * (1.0 + f.bounding_radius);
    for (int k = 0; k < 50; ++k) {
      double lv = f.level(y);
      if (std::abs(lv) < 1e-14) break;
      Vec3 g = fd_gradient(f.level, y, h);
      y -= lv * g / g.squaredNorm();
    }
    if ((y - x).norm() < 1e-14) {
      x = y;
      break;
    }
    x = y;
  }
  return x;
}

TrappedRay find_trapped_ray(const ConvexBody& b1, const ConvexBody& b2,
                            double tol, int max_iter) {
  Vec3 a1 = b1.project_boundary(b2.centroid());
  Vec3 a2 = b2.project_boundary(a1);
  double shift = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Vec3 n1 = b1.project_boundary(a2);
    Vec3 n2 = b2.project_boundary(n1);
    shift = std::max((n1 - a1).norm(), (n2 - a2).norm());
    a1 = n1;
    a2 = n2;
    if (shift < tol) break;
  }
  TrappedRay r;
  r.a1 = a1;
  r.a2 = a2;
  r.gap = (a2 - a1).norm();
  if (r.gap <= 0.0) throw ComputeError("bodies are not disjoint");
  Vec3 u = (a2 - a1) / r.gap;
  r.residual = std::max((u - b1.outward_normal(a1)).norm(),
                        (u + b2.outward_normal(a2)).norm());
  if (r.residual > 1e-10)
    throw ComputeError("trapped-ray search did not converge, residual " +
                       std::to_string(r.residual));
  return r;
}

Scene::Scene(ConvexBody b1, ConvexBody b2, SceneConfig cfg)
    : b1_(std::move(b1)), b2_(std::move(b2)), cfg_(cfg) {
  ray_ = find_trapped_ray(b1_, b2_);
  axis_ = (ray_.a2 - ray_.a1).normalized();
  frame_ = orthonormal_frame(axis_);
  diameter_ = ray_.gap + 2.0 * b1_.bounding_radius() +
              2.0 * b2_.bounding_radius();
}

const ConvexBody& Scene::body(int index) const {
  if (index == 1) return b1_;
  if (index == 2) return b2_;
  throw ComputeError("body index must be 1 or 2");
}

Scene Scene::standard() {
  return Scene(ConvexBody::sphere(Vec3::Zero(), 1.0),
               ConvexBody::sphere(Vec3(4, 0, 0), 1.0));
}

double GaugeWeight::value(const Vec3& x) const {
  Vec3 d = orientation.transpose() * (x - center);
  double s = 0.0;
  for (int i = 0; i < 3; ++i) s += coeffs[i] * d[i] * d[i];
  return std::sqrt(s);
}

Vec3 GaugeWeight::gradient(const Vec3& x) const {
  Vec3 d = orientation.transpose() * (x - center);
  double r = value(x);
  if (r < 1e-300) throw ComputeError("gauge gradient undefined at the center");
  Vec3 g;
  for (int i = 0; i < 3; ++i) g[i] = coeffs[i] * d[i] / r;
  return orientation * g;
}

}  // namespace biscat
