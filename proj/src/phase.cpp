#include "biscat/phase.hpp"

#include <cmath>
#include <sstream>

#include "biscat/fitting.hpp"

namespace biscat {

namespace {

Mat3 embed2(const TangentFrame& f, const Mat2& k) {
  Eigen::Matrix<double, 3, 2> B;
  B.col(0) = f.t1;
  B.col(1) = f.t2;
  return B * k * B.transpose();
}

Mat2 restrict2(const TangentFrame& f, const Mat3& q) {
  Mat2 k;
  k(0, 0) = f.t1.dot(q * f.t1);
  k(0, 1) = f.t1.dot(q * f.t2);
  k(1, 0) = f.t2.dot(q * f.t1);
  k(1, 1) = f.t2.dot(q * f.t2);
  return 0.5 * (k + k.transpose());
}

// Free transport of the curvature operator: K -> K (I + tau K)^{-1} on the
// transverse plane. Returns the Gaussian tube-area factor det(I + tau K).
double transport_curvature(Mat3& q, const Vec3& d, double tau) {
  const TangentFrame f = orthonormal_frame(d);
  const Mat2 k = restrict2(f, q);
  const Mat2 m = Mat2::Identity() + tau * k;
  const double det = m.determinant();
  if (det <= 0.0)
    throw ComputeError("propagate_wavefront: focal point crossed");
  const Mat2 k2 = k * m.inverse();
  q = embed2(f, 0.5 * (k2 + k2.transpose()));
  return det;
}

struct TraceState {
  bool ok = false;
  std::string why;
  Vec3 last_point;       // last reflection point (launch point if J empty)
  Vec3 dir;              // direction after the last reflection
  Vec3 b1;               // first reflection point
  double arc_after_b1 = 0.0;  // arclength from b1 to last_point
  Mat3 curvature = Mat3::Zero();
  double area_product = 1.0;  // accumulated det(I + tau K) over legs
  std::vector<Hit> hits;
  std::vector<RayLeg> legs;
};

// two-point boundary solve; returns the trace with the final leg to x
TraceState solve_shooting(const Scene& scene, const PhaseQuery& query,
                          const Vec3& xih);

}  // namespace

Mat2 WavefrontSample::curvature2(const TangentFrame& frame) const {
  return restrict2(frame, curvature);
}

Mat3 reflect_curvature(const Mat3& q, const Vec3& d, const Hit& hit) {
  const Vec3& n = hit.normal;
  const double dn = d.dot(n);
  if (dn >= 0.0)
    throw ComputeError("reflect_curvature: direction is not incoming");
  const Vec3 dr = d - 2.0 * dn * n;
  const Mat3 s3 = embed2(hit.frame, hit.shape_operator);
  const TangentFrame fr = orthonormal_frame(dr);
  // Neighbor ray through the tangent offset Delta with n.Delta = 0; its
  // reflected direction deviates by w. Q+ maps the transverse offset to w.
  Mat2 k;
  Vec3 cols[2] = {fr.t1, fr.t2};
  Vec3 w[2];
  for (int i = 0; i < 2; ++i) {
    const Vec3& m = cols[i];
    const double alpha = -n.dot(m) / n.dot(dr);
    const Vec3 big = m + alpha * dr;  // tangent: n.big = 0
    const Vec3 qb = q * big;
    w[i] = qb - 2.0 * (d.dot(s3 * big) + n.dot(qb)) * n - 2.0 * dn * (s3 * big);
  }
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      k(i, j) = cols[i].dot(w[j] - dr.dot(w[j]) * dr);
  k = 0.5 * (k + k.transpose()).eval();
  return embed2(fr, k);
}

WavefrontSample propagate_wavefront(const WavefrontSample& s, double tau) {
  if (tau < 0.0) throw ComputeError("propagate_wavefront: tau < 0");
  WavefrontSample out = s;
  out.x = s.x + tau * s.grad;
  out.phase = s.phase + tau;
  out.l_J = s.l_J + tau;
  Mat3 q = s.curvature;
  out.curv_product = s.curv_product / transport_curvature(q, s.grad, tau);
  out.curvature = q;
  return out;
}

WavefrontSample reflect_wavefront(const WavefrontSample& s, const Hit& hit) {
  WavefrontSample out = s;
  out.x = hit.point;
  out.curvature = reflect_curvature(s.curvature, s.grad, hit);
  out.grad = reflect_direction(s.grad, hit.normal);
  return out;
}

WavefrontSample evaluate_phase(const Scene& scene, const PhaseQuery& query) {
  if (!story_valid(query.J))
    throw ComputeError("evaluate_phase: malformed story");
  const double xin = query.xi.norm();
  if (xin <= 0.0) throw ComputeError("evaluate_phase: zero frequency");
  const Vec3 xih = query.xi / xin;

  WavefrontSample out;
  out.story = query.J;
  out.sign = +1;

  if (query.J.empty()) {
    out.x = query.x;
    out.phase = (query.x - query.y).dot(xih);
    out.grad = xih;
    out.curvature = Mat3::Zero();
    out.l_J = 0.0;
    out.b1 = query.x;
    out.curv_product = 1.0;
    return out;
  }

  const TraceState st = solve_shooting(scene, query, xih);
  out.x = query.x;
  out.grad = st.dir;
  out.curvature = st.curvature;
  out.l_J = st.arc_after_b1;
  out.b1 = st.b1;
  out.phase = (st.b1 - query.y).dot(xih) + out.l_J;
  out.curv_product = 1.0 / st.area_product;
  return out;
}

std::vector<RayLeg> phase_ray(const Scene& scene, const PhaseQuery& query) {
  if (!story_valid(query.J)) throw ComputeError("phase_ray: malformed story");
  const double xin = query.xi.norm();
  if (xin <= 0.0) throw ComputeError("phase_ray: zero frequency");
  const Vec3 xih = query.xi / xin;
  if (query.J.empty()) {
    const double len = (query.x - query.y).dot(xih);
    if (len < 0.0)
      throw ComputeError("phase_ray: x behind the launch plane");
    return {RayLeg{query.x - len * xih, xih, len, Mat3::Zero(), 1.0}};
  }
  return solve_shooting(scene, query, xih).legs;
}

namespace {

// The broken ray through story J ending at x is the stationary point of
//   L(p_1..p_n) = p_1.xi + sum |p_{i+1} - p_i| + |x - p_n|
// over the product of obstacle boundaries (the first term is the plane-wave
// launch). Solving for the reflection points keeps the problem local and
// well conditioned: shooting from the launch plane instead loses the basin
// to hyperbolic amplification once stories are a few periods long.
TraceState solve_shooting(const Scene& scene, const PhaseQuery& query,
                          const Vec3& xih) {
  const double diam = scene.diameter();
  const Story& J = query.J;
  const size_t n = J.size();

  std::vector<Vec3> p(n);
  for (size_t i = 0; i < n; ++i)
    p[i] = scene.body(J[i]).project_boundary(scene.midpoint());

  // Tangential gradient of L at block i with a trial point pi, in the
  // boundary tangent frame there. Zero gradient = specular reflection.
  const auto block_grad = [&](size_t i, const Vec3& pi) {
    const ConvexBody& body = scene.body(J[i]);
    const Vec3 nrm = body.outward_normal(pi);
    const Vec3 u = (i == 0) ? xih : Vec3((pi - p[i - 1]).normalized());
    const Vec3 to_next = ((i + 1 < n) ? p[i + 1] : query.x) - pi;
    const double len = to_next.norm();
    // a degenerate outgoing leg (x on the boundary) has no tangential pull
    const Vec3 v =
        len > 1e-14 * diam ? Vec3(to_next / len) : reflect_direction(u, nrm);
    const TangentFrame f = orthonormal_frame(nrm);
    const Vec3 g = u - v;
    return Vec2(f.t1.dot(g), f.t2.dot(g));
  };

  const double gtol = 1e-12;
  const double fd = 1e-7 * diam;
  const auto fail = [](const std::string& why) {
    throw ComputeError("evaluate_phase: x outside the domain of phi_J (" +
                       why + ")");
  };

  // Gauss-Seidel sweeps with a damped 2x2 Newton step per reflection point.
  double gmax = 0.0;
  bool converged = false;
  for (int sweep = 0; sweep < 500 && !converged; ++sweep) {
    gmax = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const ConvexBody& body = scene.body(J[i]);
      for (int it = 0; it < 8; ++it) {
        const Vec2 g = block_grad(i, p[i]);
        if (g.norm() < gtol) break;
        const TangentFrame f = orthonormal_frame(body.outward_normal(p[i]));
        const Vec3 ts[2] = {f.t1, f.t2};
        Mat2 jac;
        for (int c = 0; c < 2; ++c) {
          const Vec3 pp = body.project_boundary(p[i] + fd * ts[c]);
          const Vec3 pm = body.project_boundary(p[i] - fd * ts[c]);
          jac.col(c) = (block_grad(i, pp) - block_grad(i, pm)) / (2.0 * fd);
        }
        Vec2 step = jac.fullPivLu().solve(g);
        if (!step.allFinite()) step = g;
        const double cap = 0.3 * body.bounding_radius();
        if (step.norm() > cap) step *= cap / step.norm();
        bool moved = false;
        double s = 1.0;
        for (int bt = 0; bt < 30; ++bt, s *= 0.5) {
          const Vec3 trial = body.project_boundary(
              p[i] - s * (step[0] * ts[0] + step[1] * ts[1]));
          if (block_grad(i, trial).norm() < g.norm()) {
            p[i] = trial;
            moved = true;
            break;
          }
        }
        if (!moved) break;
      }
    }
    // measure stationarity after the whole sweep: a block optimized early
    // in the sweep goes stale once its neighbors move
    gmax = 0.0;
    for (size_t i = 0; i < n; ++i)
      gmax = std::max(gmax, block_grad(i, p[i]).norm());
    converged = gmax < gtol;
  }
  if (!converged) fail("reflection chain did not converge");

  // Redo the chain as a trace with curvature transport, rejecting geometry
  // the parametrix cannot use: non-incoming or grazing hits, and stationary
  // points that are not specular (x behind the reflected beam).
  const double t_first = (p[0] - query.y).dot(xih);
  if (t_first <= 0.0) fail("first obstacle behind the launch plane");
  const double delta1 = scene.config().delta1;

  TraceState st;
  st.last_point = p[0] - t_first * xih;
  st.dir = xih;
  st.b1 = p[0];
  for (size_t i = 0; i < n; ++i) {
    const ConvexBody& body = scene.body(J[i]);
    Hit hit;
    hit.point = p[i];
    hit.travel = (p[i] - st.last_point).norm();
    hit.normal = body.outward_normal(p[i]);
    hit.frame = orthonormal_frame(hit.normal);
    hit.shape_operator = body.shape_operator(p[i], hit.frame);
    if (i > 0 && hit.travel < 1e-9 * diam) fail("degenerate story leg");
    if (-st.dir.dot(hit.normal) < delta1)
      fail("reflection below the incidence margin");
    RayLeg leg{st.last_point, st.dir, hit.travel, st.curvature, 1.0};
    leg.area_det = transport_curvature(st.curvature, st.dir, hit.travel);
    st.area_product *= leg.area_det;
    st.legs.push_back(leg);
    st.curvature = reflect_curvature(st.curvature, st.dir, hit);
    st.dir = reflect_direction(st.dir, hit.normal);
    if (i > 0) st.arc_after_b1 += hit.travel;
    st.last_point = p[i];
    st.hits.push_back(hit);
    const Vec3 to_next = ((i + 1 < n) ? p[i + 1] : query.x) - p[i];
    const double len = to_next.norm();
    if (len > 1e-9 * diam && (to_next / len - st.dir).norm() > 1e-6)
      fail("query point behind the last reflection");
  }

  // close the trace with the (possibly zero-length) leg to x
  const double l_final = (query.x - st.last_point).norm();
  RayLeg leg{st.last_point, st.dir, l_final, st.curvature, 1.0};
  if (l_final > 0.0)
    leg.area_det = transport_curvature(st.curvature, st.dir, l_final);
  st.area_product *= leg.area_det;
  st.arc_after_b1 += l_final;
  st.legs.push_back(leg);
  st.ok = true;
  return st;
}

}  // namespace

GrowthTable derivative_growth_certificate(const Scene& scene,
                                          int max_story_len, const Vec3& y,
                                          const Vec3& xi) {
  if (max_story_len < 1)
    throw ComputeError("derivative_growth_certificate: need max_story_len >= 1");
  const Vec3 xih = xi.normalized();
  const double h = 1e-6 * scene.diameter();
  const TangentFrame xf = orthonormal_frame(xih);

  // probe points on the central segment, slightly off axis
  std::vector<Vec3> probes;
  const Vec3 mid = scene.midpoint();
  const TangentFrame tf = scene.transverse_frame();
  for (double a : {-0.4, 0.0, 0.4})
    for (double u : {0.0, 0.05})
      probes.push_back(mid + a * scene.axis() + u * tf.t1);

  GrowthTable table;
  std::vector<double> len, lx, lxi;
  Story j;
  for (int n = 1; n <= max_story_len; ++n) {
    j.push_back(n % 2 == 1 ? 2 : 1);
    GrowthRow row;
    row.J = j;
    int used = 0;
    for (const Vec3& p : probes) {
      try {
        Mat3 dgx;  // FD of grad phi_J in x
        for (int c = 0; c < 3; ++c) {
          PhaseQuery qp{p + h * Vec3::Unit(c), xih, j, y};
          PhaseQuery qm{p - h * Vec3::Unit(c), xih, j, y};
          dgx.col(c) = (evaluate_phase(scene, qp).grad -
                        evaluate_phase(scene, qm).grad) /
                       (2.0 * h);
        }
        Eigen::Matrix<double, 3, 2> dgxi;  // FD in the direction of xi
        const double ah = 1e-6;
        Vec3 ts[2] = {xf.t1, xf.t2};
        for (int c = 0; c < 2; ++c) {
          const Vec3 xp = (xih + ah * ts[c]).normalized();
          const Vec3 xm = (xih - ah * ts[c]).normalized();
          dgxi.col(c) = (evaluate_phase(scene, {p, xp, j, y}).grad -
                         evaluate_phase(scene, {p, xm, j, y}).grad) /
                        (2.0 * ah);
        }
        row.sup_dx = std::max(row.sup_dx, dgx.norm());
        row.sup_dxi = std::max(row.sup_dxi, dgxi.norm());
        ++used;
      } catch (const ComputeError&) {
        // probe outside the domain of this story; skip
      }
    }
    row.reliable = used > 0;
    table.rows.push_back(row);
    if (row.reliable && row.sup_dx > 0.0 && row.sup_dxi > 0.0) {
      len.push_back(static_cast<double>(n));
      lx.push_back(std::log(row.sup_dx));
      lxi.push_back(std::log(row.sup_dxi));
    }
  }
  if (len.size() >= 2) {
    table.slope_dx = fit_line(len, lx).slope;
    table.slope_dxi = fit_line(len, lxi).slope;
  }
  return table;
}

}  // namespace biscat
