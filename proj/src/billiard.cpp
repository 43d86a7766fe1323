#include "biscat/billiard.hpp"

#include <cmath>

namespace biscat {

bool story_valid(const Story& j) {
  for (size_t i = 0; i < j.size(); ++i) {
    if (j[i] != 1 && j[i] != 2) return false;
    if (i > 0 && j[i] == j[i - 1]) return false;
  }
  return true;
}

Vec3 reflect_direction(const Vec3& xi, const Vec3& n) {
  double d = xi.dot(n);
  if (d >= 0.0) throw ComputeError("reflect_direction: direction not incoming");
  return (xi - 2.0 * d * n).normalized();
}

namespace {

struct NearestHit {
  Hit hit;
  int body = 0;
};

std::optional<NearestHit> nearest_hit(const Scene& scene, const Vec3& x,
                                      const Vec3& dir) {
  std::optional<NearestHit> best;
  for (int b = 1; b <= 2; ++b) {
    auto h = scene.body(b).ray_intersect(x, dir, scene.config().tangency_tol);
    if (h && (!best || h->travel < best->hit.travel)) best = NearestHit{*h, b};
  }
  return best;
}

}  // namespace

Trajectory flow(const Scene& scene, const PhasePoint& p, double t) {
  Trajectory traj;
  traj.initial = p;
  traj.time = t;
  Vec3 x = p.x;
  Vec3 xi = p.xi.normalized();
  double elapsed = 0.0;
  while (elapsed < t) {
    auto nh = nearest_hit(scene, x, xi);
    if (!nh || nh->hit.travel > t - elapsed) {
      x += (t - elapsed) * xi;
      // free segment; escaped once outside the bounding ball and outgoing
      if (!nh) {
        Vec3 rel = x - scene.escape_center();
        if (rel.norm() > scene.escape_radius() && rel.dot(xi) > 0.0)
          traj.escaped = true;
      }
      elapsed = t;
      break;
    }
    elapsed += nh->hit.travel;
    x = nh->hit.point;
    if (nh->hit.tangential) {
      traj.tangential = true;
      break;
    }
    ReflectionEvent ev;
    ev.time = elapsed;
    ev.body = nh->body;
    ev.point = x;
    ev.normal = nh->hit.normal;
    ev.incidence_cos = -xi.dot(nh->hit.normal);
    traj.events.push_back(ev);
    traj.story.push_back(nh->body);
    xi = reflect_direction(xi, nh->hit.normal);
  }
  traj.final_state = {x, xi};
  traj.time = elapsed;
  return traj;
}

Vec3 backward_flow_constrained(const Scene& scene, const Vec3& x,
                               const Vec3& grad, const Story& story,
                               double t) {
  if (t < 0.0) throw ComputeError("backward flow: negative time");
  Vec3 pos = x;
  Vec3 dir = -grad.normalized();  // backward transport
  double remaining = t;
  size_t consumed = 0;
  while (remaining > 0.0 && consumed < story.size()) {
    int expect = story[story.size() - 1 - consumed];
    auto h = scene.body(expect).ray_intersect(pos, dir,
                                              scene.config().tangency_tol);
    if (!h || h->travel > remaining) break;
    if (h->tangential) throw ComputeError("backward flow: tangential hit");
    pos = h->point;
    remaining -= h->travel;
    dir = reflect_direction(dir, h->normal);
    ++consumed;
  }
  return pos + remaining * dir;
}

namespace {

// One full period of the transverse section map: midplane -> midplane after
// two reflections, coordinates (u, v, pu, pv) with slopes pu = (d.f1)/(d.e).
Eigen::Vector4d section_map(const Scene& scene, const Eigen::Vector4d& z,
                            double* period_out = nullptr) {
  const Vec3 mid = scene.midpoint();
  const Vec3 e = scene.axis();
  const TangentFrame& f = scene.transverse_frame();
  Vec3 x = mid + z[0] * f.t1 + z[1] * f.t2;
  Vec3 dir = (e + z[2] * f.t1 + z[3] * f.t2).normalized();
  int reflections = 0;
  double elapsed = 0.0;
  for (int leg = 0; leg < 16; ++leg) {
    auto nh = nearest_hit(scene, x, dir);
    if (reflections >= 2) {
      double denom = dir.dot(e);
      double tau = (mid - x).dot(e) / denom;
      if (tau > 0.0 && denom > 0.0 &&
          (!nh || tau < nh->hit.travel)) {
        x += tau * dir;
        elapsed += tau;
        if (period_out) *period_out = elapsed;
        Eigen::Vector4d out;
        out[0] = (x - mid).dot(f.t1);
        out[1] = (x - mid).dot(f.t2);
        out[2] = dir.dot(f.t1) / denom;
        out[3] = dir.dot(f.t2) / denom;
        return out;
      }
    }
    if (!nh) throw ComputeError("return map: trajectory escaped the section");
    if (nh->hit.tangential)
      throw ComputeError("return map: tangential reflection");
    x = nh->hit.point;
    elapsed += nh->hit.travel;
    dir = reflect_direction(dir, nh->hit.normal);
    ++reflections;
  }
  throw ComputeError("return map: no section crossing found");
}

}  // namespace

ReturnMapAnalysis return_map(const Scene& scene, double fd_step_factor) {
  ReturnMapAnalysis r;
  section_map(scene, Eigen::Vector4d::Zero(), &r.period);
  double h = fd_step_factor * scene.gap();
  Eigen::Matrix4d jac;
  for (int i = 0; i < 4; ++i) {
    Eigen::Vector4d zp = Eigen::Vector4d::Zero(), zm = Eigen::Vector4d::Zero();
    zp[i] = h;
    zm[i] = -h;
    jac.col(i) = (section_map(scene, zp) - section_map(scene, zm)) / (2.0 * h);
  }
  Eigen::JacobiSVD<Eigen::Matrix4d> svd(jac);
  if (svd.singularValues()(0) / svd.singularValues()(3) > 1e8)
    throw ComputeError(
        "return map: ill-conditioned Jacobian estimate, change the FD step");
  r.monodromy = jac;
  Eigen::EigenSolver<Eigen::Matrix4d> es(jac);
  for (int i = 0; i < 4; ++i) r.eigenvalues.push_back(es.eigenvalues()[i]);
  std::sort(r.eigenvalues.begin(), r.eigenvalues.end(),
            [](auto a, auto b) { return std::abs(a) < std::abs(b); });
  r.lambda = std::abs(r.eigenvalues[0]) * std::abs(r.eigenvalues[1]);
  r.mu_max = std::abs(r.eigenvalues[3]);
  auto sub = [&](int a, int b) {
    Eigen::Matrix2d m;
    m << jac(a, a), jac(a, b), jac(b, a), jac(b, b);
    return m.determinant();
  };
  r.block_det1 = sub(0, 2);
  r.block_det2 = sub(1, 3);
  return r;
}

}  // namespace biscat
