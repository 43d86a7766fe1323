#include "biscat/morawetz.hpp"

#include <cmath>
#include <random>

namespace biscat {

namespace {

// rho = sqrt(sum a_i x_i^2) with a_i = 1 for i < k, eps otherwise
VecN gauge_coeffs(int n, int k, double eps) {
  VecN a(n);
  for (int i = 0; i < n; ++i) a[i] = i < k ? 1.0 : eps;
  return a;
}

Weight gauge_weight_impl(std::string kind, int n, int k, double eps) {
  if (n < 2 || k < 1 || k > n)
    throw ComputeError("gauge_weight: need n >= 2 and 1 <= k <= n");
  if (eps <= 0.0 || eps > 1.0)
    throw ComputeError("gauge_weight: need eps in (0, 1]");
  const VecN a = gauge_coeffs(n, k, eps);
  const BilaplacianThreshold th = bilaplacian_threshold(n, k);
  const double A = th.eval_A(eps), B = th.eval_B(eps), C = th.eval_C(eps);

  Weight w;
  w.kind = std::move(kind);
  w.dim = n;
  w.value = [a](const VecN& x) {
    return std::sqrt(x.cwiseProduct(x).dot(a));
  };
  w.gradient = [a, w](const VecN& x) {
    return VecN(a.cwiseProduct(x) / w.value(x));
  };
  w.hessian = [a, w](const VecN& x) {
    const double r = w.value(x);
    const VecN ax = a.cwiseProduct(x);
    MatN h = (a / r).asDiagonal();
    h -= ax * ax.transpose() / (r * r * r);
    return h;
  };
  w.laplacian = [a, w](const VecN& x) {
    const double r = w.value(x);
    return a.sum() / r - a.cwiseProduct(a).dot(x.cwiseProduct(x)) / (r * r * r);
  };
  w.bilaplacian = [a, w, k, A, B, C](const VecN& x) {
    const double r = w.value(x);
    const double s2 = x.tail(x.size() - k).squaredNorm();
    return A / std::pow(r, 3) + B * s2 / std::pow(r, 5) +
           C * s2 * s2 / std::pow(r, 7);
  };
  return w;
}

}  // namespace

Weight two_center_weight(const Vec3& c) {
  Weight w;
  w.kind = "two_center";
  w.dim = 3;
  const Vec3 cc = c;
  w.value = [cc](const VecN& x) {
    const Vec3 p = x.head<3>();
    return p.norm() + (p - cc).norm();
  };
  w.gradient = [cc](const VecN& x) {
    const Vec3 p = x.head<3>();
    const Vec3 g = p.normalized() + (p - cc).normalized();
    return VecN(g);
  };
  w.hessian = [cc](const VecN& x) {
    const Vec3 p = x.head<3>();
    auto proj = [](const Vec3& v) {
      const double r = v.norm();
      return Mat3((Mat3::Identity() - v * v.transpose() / (r * r)) / r);
    };
    return MatN(proj(p) + proj(p - cc));
  };
  w.laplacian = [cc](const VecN& x) {
    const Vec3 p = x.head<3>();
    return 2.0 / p.norm() + 2.0 / (p - cc).norm();
  };
  // Delta(1/|x|) = 0 away from the centers
  w.bilaplacian = [](const VecN&) { return 0.0; };
  return w;
}

Weight gauge_weight(int n, int k, double eps) {
  return gauge_weight_impl("gauge", n, k, eps);
}

Weight cylindrical_extension(int n, int k, double eps) {
  // sqrt(rho(x)^2 + z^2): the z coordinate carries coefficient 1, so the
  // lift is the (n+1, k+1) gauge with z moved into the leading block
  Weight w = gauge_weight_impl("cylindrical_extension", n + 1, k + 1, eps);
  // reorder: callers pass (x_1..x_n, z); internally z must sit at index k
  auto permute = [n, k](const VecN& x) {
    VecN y(n + 1);
    for (int i = 0; i < k; ++i) y[i] = x[i];
    y[k] = x[n];
    for (int i = k; i < n; ++i) y[i + 1] = x[i];
    return y;
  };
  // d/dx_i of the composed weight is the internal derivative at the slot x_i
  // lands in, i.e. the same index map permute uses
  auto internal_index = [n, k](int i) {
    if (i < k) return i;
    if (i == n) return k;
    return i + 1;
  };
  const Weight base = w;
  w.value = [base, permute](const VecN& x) { return base.value(permute(x)); };
  w.laplacian = [base, permute](const VecN& x) {
    return base.laplacian(permute(x));
  };
  w.bilaplacian = [base, permute](const VecN& x) {
    return base.bilaplacian(permute(x));
  };
  w.gradient = [base, permute, internal_index, n](const VecN& x) {
    const VecN g = base.gradient(permute(x));
    VecN out(n + 1);
    for (int i = 0; i <= n; ++i) out[i] = g[internal_index(i)];
    return out;
  };
  w.hessian = [base, permute, internal_index, n](const VecN& x) {
    const MatN h = base.hessian(permute(x));
    MatN out(n + 1, n + 1);
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j <= n; ++j)
        out(i, j) = h(internal_index(i), internal_index(j));
    return out;
  };
  return w;
}

double BilaplacianThreshold::eval_A(double eps) const {
  return A[0] + A[1] * eps + A[2] * eps * eps;
}
double BilaplacianThreshold::eval_B(double eps) const {
  return B[0] + eps * (B[1] + eps * (B[2] + eps * B[3]));
}
double BilaplacianThreshold::eval_C(double eps) const {
  return C[0] + eps * (C[1] + eps * (C[2] + eps * (C[3] + eps * C[4])));
}

BilaplacianThreshold bilaplacian_threshold(int n, int k) {
  if (n < 2 || k < 1 || k > n)
    throw ComputeError("bilaplacian_threshold: need n >= 2 and 1 <= k <= n");
  BilaplacianThreshold th;
  const double nk = n - k;
  th.A = {-(k - 1.0) * (k - 3.0), -2.0 * nk * (k - 3.0), -(nk + 2.0) * nk};
  th.B = {0.0, 6.0 * (3.0 - k), 6.0 * (2.0 * k - n - 5.0), 6.0 * (nk + 2.0)};
  th.C = {0.0, 0.0, -15.0, 30.0, -15.0};
  if (k >= 3) {
    th.eps0 = 0.0;
  } else if (k == 2) {
    if (n == 2)
      throw ComputeError("bilaplacian_threshold: k=2 threshold needs n > 2");
    th.eps0 = 1.0 / n + std::sqrt(2.0 * (n - 2.0) * (n - 1.0)) / (n * (n - 2.0));
  } else {
    th.eps0 = 4.0 / (n + 1.0);
  }
  return th;
}

BilaplacianVerdict verify_bilaplacian(int n, int k, double eps, int samples,
                                      std::uint64_t seed) {
  if (samples < 1) throw ComputeError("verify_bilaplacian: need samples >= 1");
  const Weight w = gauge_weight(n, k, eps);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(-2.0, 2.0);

  BilaplacianVerdict v;
  v.nonpositive = true;
  v.fd_consistent = true;
  v.max_value = -std::numeric_limits<double>::infinity();
  while (v.samples_used < samples) {
    VecN x(n);
    for (int i = 0; i < n; ++i) x[i] = coord(rng);
    if (w.value(x) < 0.5) continue;  // stay away from the apex singularity
    const double cf = w.bilaplacian(x);
    // 4th-order centered Laplacian of the closed-form Laplacian
    const double h = 2e-3;
    double fd = 0.0;
    for (int i = 0; i < n; ++i) {
      auto at = [&](double s) {
        VecN y = x;
        y[i] += s;
        return w.laplacian(y);
      };
      fd += (-at(2 * h) + 16.0 * at(h) - 30.0 * at(0.0) + 16.0 * at(-h) -
             at(-2 * h)) /
            (12.0 * h * h);
    }
    // unit floor: when the closed form vanishes identically the FD noise
    // must be judged on an absolute scale, not against itself
    const double scale = std::max(std::abs(cf), 1.0);
    v.max_fd_error = std::max(v.max_fd_error, std::abs(cf - fd) / scale);
    v.max_value = std::max(v.max_value, cf);
    if (cf > 1e-8) v.nonpositive = false;
    ++v.samples_used;
  }
  if (v.max_fd_error > 1e-4) {
    v.fd_consistent = false;
    throw ComputeError("verify_bilaplacian: closed form disagrees with FD");
  }
  return v;
}

double two_center_lambda2(const Vec3& x, const Vec3& c) {
  const double r1 = x.norm(), r2 = (x - c).norm();
  if (r1 < 1e-12 || r2 < 1e-12)
    throw ComputeError("two_center_lambda2: x at a center");
  const double ct = std::clamp(x.dot(x - c) / (r1 * r2), -1.0, 1.0);
  const double s2t = 1.0 - ct * ct;
  const double sum = 1.0 / r1 + 1.0 / r2;
  return 0.5 *
         (sum + std::sqrt(std::max(sum * sum - 4.0 * s2t / (r1 * r2), 0.0)));
}

TwoCenterReport two_center_analysis(const Vec3& c, double A, double alpha,
                                    int samples, std::uint64_t seed) {
  if (A <= c.norm())
    throw ComputeError("two_center_analysis: ball must contain both centers");
  if (alpha <= 0.0 || alpha >= 1.0)
    throw ComputeError("two_center_analysis: need alpha in (0,1)");
  if (samples < 1) throw ComputeError("two_center_analysis: need samples");

  const Weight chi = two_center_weight(c);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(-A, A);
  std::normal_distribution<double> gauss(0.0, 1.0);

  TwoCenterReport rep;
  rep.min_form_constant = std::numeric_limits<double>::infinity();
  int excluded = 0;
  while (rep.samples_used < samples) {
    const Vec3 x(coord(rng), coord(rng), coord(rng));
    if (x.norm() > A) continue;
    // Omega: outside the two unit obstacles; skip the singular centers
    if (x.norm() < 1.0 || (x - c).norm() < 1.0) {
      ++rep.samples_skipped;
      continue;
    }
    ++rep.samples_used;
    const double r1 = x.norm(), r2 = (x - c).norm();
    const double ct = std::clamp(x.dot(x - c) / (r1 * r2), -1.0, 1.0);
    const double s2t = 1.0 - ct * ct;
    const double lam2 = two_center_lambda2(x, c);
    // eigensolve oracle of the explicit 2x2 block
    Mat2 m;
    m(0, 0) = 1.0 / r1 + ct * ct / r2;
    m(0, 1) = m(1, 0) = std::sqrt(std::max(s2t, 0.0)) * ct / r2;
    m(1, 1) = s2t / r2;
    const double lam_eig =
        Eigen::SelfAdjointEigenSolver<Mat2>(m).eigenvalues().maxCoeff();
    rep.lambda2_max_mismatch =
        std::max(rep.lambda2_max_mismatch, std::abs(lam2 - lam_eig));
    if (s2t < alpha) {
      ++excluded;
      continue;
    }
    // V(alpha) member: empirical Hessian lower bound over random xi
    const MatN h = chi.hessian(VecN(x));
    for (int t = 0; t < 4; ++t) {
      Vec3 xi(gauss(rng), gauss(rng), gauss(rng));
      xi.normalize();
      rep.min_form_constant =
          std::min(rep.min_form_constant, xi.dot(h * Vec3(xi)) / alpha);
    }
  }
  rep.excluded_fraction =
      static_cast<double>(excluded) / static_cast<double>(rep.samples_used);
  return rep;
}

WeightReport flux_and_identity_certificate(const Weight& w, const Scene& scene,
                                           int samples, std::uint64_t seed) {
  if (w.dim != 3)
    throw ComputeError("flux_and_identity_certificate: weight must be 3-D");
  if (samples < 1)
    throw ComputeError("flux_and_identity_certificate: need samples");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Vec3 mid = scene.midpoint();
  const double R = 2.0 * scene.diameter();
  std::uniform_real_distribution<double> coord(-R, R);

  WeightReport rep;
  rep.min_flux = std::numeric_limits<double>::infinity();
  rep.min_hessian_eig = std::numeric_limits<double>::infinity();
  rep.min_laplacian = std::numeric_limits<double>::infinity();
  rep.max_bilaplacian = -std::numeric_limits<double>::infinity();

  while (rep.interior_samples < samples) {
    const Vec3 x = mid + Vec3(coord(rng), coord(rng), coord(rng));
    if (scene.body(1).contains(x) || scene.body(2).contains(x)) continue;
    // stay off the singular set (weight centers sit at the body centroids)
    if ((x - scene.body(1).centroid()).norm() < 1e-3 ||
        (x - scene.body(2).centroid()).norm() < 1e-3)
      continue;
    const VecN xv(x);
    rep.min_laplacian = std::min(rep.min_laplacian, w.laplacian(xv));
    rep.max_bilaplacian = std::max(rep.max_bilaplacian, w.bilaplacian(xv));
    const MatN h = w.hessian(xv);
    rep.min_hessian_eig = std::min(
        rep.min_hessian_eig,
        Eigen::SelfAdjointEigenSolver<MatN>(h).eigenvalues().minCoeff());
    ++rep.interior_samples;
  }
  for (int b = 1; b <= 2; ++b) {
    const ConvexBody& body = scene.body(b);
    for (int i = 0; i < samples; ++i) {
      Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
      dir.normalize();
      const Vec3 p = body.project_boundary(
          body.centroid() + 2.0 * body.bounding_radius() * dir);
      // flux is taken against the normal of the exterior domain, which points
      // into the body: -grad(w) . (-n_body) = grad(w) . n_body
      const Vec3 n = body.outward_normal(p);
      const VecN g = w.gradient(VecN(p));
      rep.min_flux = std::min(rep.min_flux, g.head<3>().dot(n));
      ++rep.boundary_samples;
    }
  }
  rep.hessian_psd = rep.min_hessian_eig > -1e-10;
  rep.bilaplacian_nonpos = rep.max_bilaplacian < 1e-8;
  rep.laplacian_nonneg = rep.min_laplacian > -1e-10;
  rep.boundary_flux_nonneg = rep.min_flux > -1e-10;
  return rep;
}

IlluminationReport illumination_report(const Weight& rho,
                                       const std::vector<Vec3>& boundary,
                                       const std::vector<Vec3>& normals) {
  if (boundary.empty() || boundary.size() != normals.size())
    throw ComputeError("illumination_report: bad boundary sampling");
  IlluminationReport rep;
  rep.margin = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < boundary.size(); ++i) {
    const VecN g = rho.gradient(VecN(boundary[i]));
    const double d = g.head<3>().dot(normals[i]);
    if (d < rep.margin) {
      rep.margin = d;
      rep.argmin = boundary[i];
    }
  }
  rep.samples_used = static_cast<int>(boundary.size());
  return rep;
}

double log_factor(double T) {
  if (T <= 0.0) throw ComputeError("log_factor: need T > 0");
  return 2.0 * std::asinh(T);
}

}  // namespace biscat
