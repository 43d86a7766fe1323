#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>

namespace biscat {

using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

struct ComputeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Orthonormal basis of the plane orthogonal to a unit vector.
struct TangentFrame {
  Vec3 t1, t2;
};

TangentFrame orthonormal_frame(const Vec3& n);

struct Hit {
  Vec3 point;
  double travel = 0.0;  // arclength from the ray origin
  Vec3 normal;          // outward unit normal
  TangentFrame frame;   // frame of the boundary tangent plane
  Mat2 shape_operator;  // second fundamental form in (t1, t2)
  bool tangential = false;
};

struct SphereShape {
  Vec3 center;
  double radius;
};

struct EllipsoidShape {
  Vec3 center;
  Vec3 semi_axes;
  Mat3 orientation;  // body-to-world rotation
};

/// Smooth strictly convex level set {F < 0}. Queried by safeguarded
/// Newton along rays; normals and curvature from finite differences.
struct ImplicitShape {
  std::function<double(const Vec3&)> level;
  Vec3 interior_point;     // any point with F < 0
  double bounding_radius;  // ball around interior_point containing the body
};

class ConvexBody {
 public:
  explicit ConvexBody(SphereShape s) : shape_(std::move(s)) {}
  explicit ConvexBody(EllipsoidShape e);
  explicit ConvexBody(ImplicitShape f) : shape_(std::move(f)) {}

  static ConvexBody sphere(const Vec3& center, double radius);
  static ConvexBody ellipsoid(const Vec3& center, const Vec3& semi_axes,
                              const Mat3& orientation = Mat3::Identity());

  bool contains(const Vec3& x) const;
  double level(const Vec3& x) const;  // negative inside, zero on boundary

  /// First intersection of the ray origin + t*dir, t > 0, if any.
  /// Grazing hits (|dir.n| below tangency_tol) come back flagged tangential.
  std::optional<Hit> ray_intersect(const Vec3& origin, const Vec3& dir,
                                   double tangency_tol = 1e-8) const;

  Vec3 outward_normal(const Vec3& boundary_point) const;
  Mat2 shape_operator(const Vec3& boundary_point,
                      const TangentFrame& frame) const;

  /// Closest boundary point to p (p outside or inside).
  Vec3 project_boundary(const Vec3& p) const;

  Vec3 centroid() const;
  double bounding_radius() const;

  bool is_sphere() const { return std::holds_alternative<SphereShape>(shape_); }

 private:
  std::variant<SphereShape, EllipsoidShape, ImplicitShape> shape_;
  // ellipsoid cache: M = R diag(1/a^2) R^T so level = (x-c)^T M (x-c) - 1
  Mat3 quad_form_ = Mat3::Identity();
};

struct TrappedRay {
  Vec3 a1, a2;  // endpoints on body1 / body2
  double gap = 0.0;
  double residual = 0.0;  // perpendicularity residual
};

/// Minimizing segment between two disjoint convex bodies, by alternating
/// projection. Throws ComputeError on non-convergence.
TrappedRay find_trapped_ray(const ConvexBody& b1, const ConvexBody& b2,
                            double tol = 1e-12, int max_iter = 20000);

struct SceneConfig {
  double cylinder_radius = 0.3;
  double delta1 = 1e-2;        // reflection-domain margin on -n.grad
  double tangency_tol = 1e-8;  // |dir.n| below this is a grazing hit
};

class Scene {
 public:
  Scene(ConvexBody b1, ConvexBody b2, SceneConfig cfg = {});

  const ConvexBody& body(int index) const;  // index in {1, 2}
  const SceneConfig& config() const { return cfg_; }

  const TrappedRay& trapped_ray() const { return ray_; }
  const Vec3& axis() const { return axis_; }  // unit, body1 -> body2
  double gap() const { return ray_.gap; }
  Vec3 midpoint() const { return 0.5 * (ray_.a1 + ray_.a2); }
  const TangentFrame& transverse_frame() const { return frame_; }

  double diameter() const { return diameter_; }
  Vec3 escape_center() const { return midpoint(); }
  double escape_radius() const { return 2.0 * diameter_; }

  static Scene standard();  // unit spheres, centers 4 apart

 private:
  ConvexBody b1_, b2_;
  SceneConfig cfg_;
  TrappedRay ray_;
  Vec3 axis_;
  TangentFrame frame_;
  double diameter_ = 0.0;
};

/// Minkowski gauge of an axis-scaled ellipsoid in R^3 centered at c:
/// rho(x) = sqrt(sum_i q_i (x_i - c_i)^2) in the body frame.
struct GaugeWeight {
  Vec3 center = Vec3::Zero();
  Vec3 coeffs = Vec3::Ones();  // q_i = 1 / semi_axis_i^2
  Mat3 orientation = Mat3::Identity();

  double value(const Vec3& x) const;
  Vec3 gradient(const Vec3& x) const;
};

}  // namespace biscat
