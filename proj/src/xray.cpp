#include "cgolab/xray.hpp"

#include <algorithm>
#include <cmath>

namespace cgolab::xray {

namespace {

double cross2(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

// trapezoid weights for the (uniform + short last interval) path samples
std::vector<double> path_weights(const geo::GeodesicPath& p) {
  const int n = static_cast<int>(p.t.size());
  std::vector<double> w(n, 0.0);
  for (int i = 0; i + 1 < n; ++i) {
    const double dt = p.t[i + 1] - p.t[i];
    w[i] += 0.5 * dt;
    w[i + 1] += 0.5 * dt;
  }
  return w;
}

}  // namespace

complex GridFn::interp(Vec2 p) const {
  const double h = gs.h();
  const double fx = (p.x + gs.R) / h, fy = (p.y + gs.R) / h;
  const int i = static_cast<int>(std::floor(fx));
  const int j = static_cast<int>(std::floor(fy));
  if (i < 0 || j < 0 || i + 1 >= gs.n || j + 1 >= gs.n) return {};
  const double sx = fx - i, sy = fy - j;
  return (1 - sx) * (1 - sy) * v[gs.id(i, j)] +
         sx * (1 - sy) * v[gs.id(i + 1, j)] +
         (1 - sx) * sy * v[gs.id(i, j + 1)] +
         sx * sy * v[gs.id(i + 1, j + 1)];
}

complex grid_inner(const geo::SimpleManifold2D& man, const GridFn& a,
                   const GridFn& b) {
  complex acc{};
  for (int i = 0; i < a.gs.n; ++i)
    for (int j = 0; j < a.gs.n; ++j) {
      const Vec2 p = a.gs.point(i, j);
      if (!man.inside(p)) continue;
      acc += a.v[a.gs.id(i, j)] * std::conj(b.v[b.gs.id(i, j)]) *
             std::exp(2.0 * man.phi(p)) * a.gs.cell();
    }
  return acc;
}

BoundaryGrid build_boundary_grid(const geo::SimpleManifold2D& man, int nbeta,
                                 int nalpha, double step, double margin) {
  BoundaryGrid bg;
  bg.nbeta = nbeta;
  bg.nalpha = nalpha;
  bg.margin = margin;
  bg.alpha_max = std::acos(margin);
  bg.step = step;
  const double dbeta = 2.0 * pi / nbeta;
  const double dalpha = 2.0 * bg.alpha_max / nalpha;
  bg.beta.resize(nbeta);
  bg.alpha.resize(nalpha);
  for (int ib = 0; ib < nbeta; ++ib) bg.beta[ib] = dbeta * ib;
  for (int ia = 0; ia < nalpha; ++ia)
    bg.alpha[ia] = -bg.alpha_max + dalpha * (ia + 0.5);  // midpoint rule

  const double R = man.radius;
  bg.s.resize(bg.size());
  for (int ib = 0; ib < nbeta; ++ib) {
    const double beta = bg.beta[ib];
    const Vec2 x{R * std::cos(beta), R * std::sin(beta)};
    const Vec2 nin = -1.0 * x.normalized();  // inward normal direction
    // d(boundary measure) = e^{phi} R dbeta x dalpha (conformal angles
    // coincide with Euclidean ones)
    const double wb = std::exp(man.phi(x)) * R * dbeta * dalpha;
    for (int ia = 0; ia < nalpha; ++ia) {
      const double al = bg.alpha[ia];
      BoundarySample& sm = bg.s[bg.id(ib, ia)];
      sm.x = x;
      sm.xi = {std::cos(al) * nin.x - std::sin(al) * nin.y,
               std::sin(al) * nin.x + std::cos(al) * nin.y};
      sm.mu = std::cos(al);
      sm.w = wb;
      sm.tau = geo::integrate_geodesic(man, x, sm.xi, step).length();
    }
  }
  return bg;
}

RayTransformData ray_transform(const geo::SimpleManifold2D& man,
                               const BoundaryGrid& bg, const GridFn& f,
                               double lambda) {
  RayTransformData out;
  out.lambda = lambda;
  out.values.resize(bg.size());
  for (int s = 0; s < bg.size(); ++s) {
    const auto& sm = bg.s[s];
    const auto path = geo::integrate_geodesic(man, sm.x, sm.xi, bg.step);
    const auto w = path_weights(path);
    complex acc{};
    for (size_t t = 0; t < path.t.size(); ++t)
      acc += w[t] * std::exp(-lambda * path.t[t]) * f.interp(path.x[t]);
    out.values[s] = acc;
  }
  return out;
}

complex ray_integral(const geo::SimpleManifold2D& man, Vec2 x0, Vec2 dir,
                     const std::function<complex(Vec2)>& f, double lambda,
                     double step) {
  const auto path = geo::integrate_geodesic(man, x0, dir, step);
  const auto w = path_weights(path);
  complex acc{};
  for (size_t t = 0; t < path.t.size(); ++t)
    acc += w[t] * std::exp(-lambda * path.t[t]) * f(path.x[t]);
  return acc;
}

namespace {

// interpolate boundary data at an arbitrary entry sample (y on the
// boundary circle, inward direction d): bilinear in (beta, alpha) with
// periodic beta; zero beyond the outermost alpha midpoints (the data is
// required to vanish near tangential directions)
complex boundary_interp(const BoundaryGrid& bg, const Eigen::VectorXcd& h,
                        Vec2 y, Vec2 d) {
  const double beta = std::atan2(y.y, y.x);
  const Vec2 nin = -1.0 * y.normalized();
  const double alpha = std::atan2(cross2(nin, d), nin.dot(d));
  const double dbeta = 2.0 * pi / bg.nbeta;
  const double dalpha = 2.0 * bg.alpha_max / bg.nalpha;

  double fb = beta / dbeta;
  fb -= std::floor(fb / bg.nbeta) * bg.nbeta;
  int ib = static_cast<int>(std::floor(fb)) % bg.nbeta;
  const double sb = fb - std::floor(fb);
  const int ib1 = (ib + 1) % bg.nbeta;

  const double fa = (alpha - bg.alpha[0]) / dalpha;
  const int ia = static_cast<int>(std::floor(fa));
  if (ia < 0 || ia + 1 >= bg.nalpha) return {};
  const double sa = fa - ia;

  return (1 - sb) * (1 - sa) * h[bg.id(ib, ia)] +
         sb * (1 - sa) * h[bg.id(ib1, ia)] +
         (1 - sb) * sa * h[bg.id(ib, ia + 1)] +
         sb * sa * h[bg.id(ib1, ia + 1)];
}

}  // namespace

GridFn adjoint_ray_transform(const geo::SimpleManifold2D& man,
                             const BoundaryGrid& bg,
                             const Eigen::VectorXcd& h, double lambda,
                             const GridSpec& gs, int ndir) {
  GridFn out;
  out.gs = gs;
  out.v = Eigen::VectorXcd::Zero(gs.npoints());
  const double dth = 2.0 * pi / ndir;
  for (int i = 0; i < gs.n; ++i)
    for (int j = 0; j < gs.n; ++j) {
      const Vec2 x = gs.point(i, j);
      if (x.norm() >= man.radius - 1e-9) continue;
      complex acc{};
      for (int t = 0; t < ndir; ++t) {
        const double th = dth * t;
        const Vec2 xi{std::cos(th), std::sin(th)};
        // backward tracing to the entry point of the (x, xi) geodesic
        const auto back = geo::integrate_geodesic(man, x, -1.0 * xi,
                                                  bg.step);
        const Vec2 y = back.x.back();
        const Vec2 d = -1.0 * back.v.back().normalized();
        acc += std::exp(-lambda * back.length()) *
               boundary_interp(bg, h, y, d) * dth;
      }
      out.v[gs.id(i, j)] = acc;
    }
  return out;
}

double santalo_fan(const geo::SimpleManifold2D& man, const BoundaryGrid& bg,
                   const std::function<double(Vec2, Vec2)>& F) {
  double acc = 0.0;
  for (int s = 0; s < bg.size(); ++s) {
    const auto& sm = bg.s[s];
    const auto path = geo::integrate_geodesic(man, sm.x, sm.xi, bg.step);
    const auto w = path_weights(path);
    double ray = 0.0;
    for (size_t t = 0; t < path.t.size(); ++t)
      ray += w[t] * F(path.x[t], path.v[t]);
    acc += sm.w * sm.mu * ray;
  }
  return acc;
}

double santalo_direct(const geo::SimpleManifold2D& man,
                      const std::function<double(Vec2, Vec2)>& F, int n,
                      int ndir) {
  GridSpec gs{n, man.radius};
  const double dth = 2.0 * pi / ndir;
  double acc = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const Vec2 x = gs.point(i, j);
      if (x.norm() >= man.radius) continue;
      const double vol = std::exp(2.0 * man.phi(x)) * gs.cell();
      const double sp = std::exp(-man.phi(x));  // unit g-speed scale
      for (int t = 0; t < ndir; ++t) {
        const double th = dth * t;
        acc += vol * dth * F(x, {sp * std::cos(th), sp * std::sin(th)});
      }
    }
  return acc;
}

namespace {

// geodesic from x through y: returns the forward path (x to exit past y)
// and the g-length d of the x-to-y leg; shooting over the launch angle
// with secant refinement on the transverse miss at closest approach
struct Connection {
  geo::GeodesicPath path;
  double d = 0.0;
  int hit_index = 0;
};

Connection connect(const geo::SimpleManifold2D& man, Vec2 x, Vec2 y,
                   double step) {
  double theta = std::atan2(y.y - x.y, y.x - x.x);
  double miss_prev = 0.0, theta_prev = theta;
  Connection best;
  for (int it = 0; it < 60; ++it) {
    const Vec2 dir{std::cos(theta), std::sin(theta)};
    auto path = geo::integrate_geodesic(man, x, dir, step);
    // closest sample to y, then parabolic refinement of the parameter
    int c = 0;
    double dmin = (path.x[0] - y).norm();
    for (size_t t = 1; t < path.x.size(); ++t) {
      const double dd = (path.x[t] - y).norm();
      if (dd < dmin) {
        dmin = dd;
        c = static_cast<int>(t);
      }
    }
    const Vec2 tangent = path.v[c].normalized();
    const double along = tangent.dot(y - path.x[c]);
    const double miss = cross2(tangent, y - path.x[c]);
    best.path = std::move(path);
    best.d = best.path.t[c] + along * std::exp(man.phi(y));  // g-length leg
    best.hit_index = c;
    if (std::abs(miss) < 1e-9 || man.is_flat()) return best;
    // secant update on the launch angle
    double theta_next;
    if (it == 0) {
      theta_next = theta + miss / std::max(best.d, step);
    } else {
      const double dm = miss - miss_prev;
      theta_next = (std::abs(dm) > 1e-15)
                       ? theta - miss * (theta - theta_prev) / dm
                       : theta;
    }
    theta_prev = theta;
    miss_prev = miss;
    theta = theta_next;
  }
  return best;
}

}  // namespace

double kernel_K_lambda(const geo::SimpleManifold2D& man, Vec2 x, Vec2 y,
                       double lambda, double step) {
  if ((x - y).norm() < 1e-12)
    fail("kernel_K_lambda: diagonal x == y is singular");
  const auto con = connect(man, x, y, step);
  const double d = con.d;
  const double fwd = con.path.length();        // x to exit past y
  const double b = std::max(fwd - d, 0.0);     // y to exit, forward leg
  const Vec2 dir0 = con.path.v[0];
  const double a =
      geo::integrate_geodesic(man, x, -1.0 * dir0, step).length();
  const double phip = 2.0 * a + d;
  const double phim = 2.0 * b + d;

  // Jacobi field J(0)=0, J'(0)=1 along the connecting geodesic carries
  // the exponential-map Jacobian and volume factors in one stroke:
  // dV_g(y) = |J| dd dxi in geodesic polar coordinates about x
  const auto J = geo::jacobi_field(man, con.path);
  const int c = con.hit_index;
  double Jd = J[c];
  if (c + 1 < static_cast<int>(J.size()) &&
      con.path.t[c + 1] > con.path.t[c]) {
    const double s =
        (d - con.path.t[c]) / (con.path.t[c + 1] - con.path.t[c]);
    Jd = (1.0 - s) * J[c] + s * J[c + 1];
  }
  return (std::exp(-lambda * phip) + std::exp(-lambda * phim)) /
         std::abs(Jd);
}

Eigen::SparseMatrix<double> discrete_transform(
    const geo::SimpleManifold2D& man, const BoundaryGrid& bg,
    const GridSpec& gs, double lambda) {
  std::vector<Eigen::Triplet<double>> trip;
  const double h = gs.h();
  for (int s = 0; s < bg.size(); ++s) {
    const auto& sm = bg.s[s];
    const auto path = geo::integrate_geodesic(man, sm.x, sm.xi, bg.step);
    const auto w = path_weights(path);
    for (size_t t = 0; t < path.t.size(); ++t) {
      const double wt = w[t] * std::exp(-lambda * path.t[t]);
      const Vec2 p = path.x[t];
      const double fx = (p.x + gs.R) / h, fy = (p.y + gs.R) / h;
      const int i = static_cast<int>(std::floor(fx));
      const int j = static_cast<int>(std::floor(fy));
      if (i < 0 || j < 0 || i + 1 >= gs.n || j + 1 >= gs.n) continue;
      const double sx = fx - i, sy = fy - j;
      trip.emplace_back(s, gs.id(i, j), wt * (1 - sx) * (1 - sy));
      trip.emplace_back(s, gs.id(i + 1, j), wt * sx * (1 - sy));
      trip.emplace_back(s, gs.id(i, j + 1), wt * (1 - sx) * sy);
      trip.emplace_back(s, gs.id(i + 1, j + 1), wt * sx * sy);
    }
  }
  Eigen::SparseMatrix<double> T(bg.size(), gs.npoints());
  T.setFromTriplets(trip.begin(), trip.end());
  return T;
}

NormalOperatorMatrix normal_operator(const geo::SimpleManifold2D& man,
                                     const BoundaryGrid& bg,
                                     const GridSpec& gs, double lambda) {
  const auto T = discrete_transform(man, bg, gs, lambda);
  Eigen::VectorXd wmu(bg.size());
  for (int s = 0; s < bg.size(); ++s) wmu[s] = bg.s[s].w * bg.s[s].mu;
  NormalOperatorMatrix out;
  out.a = Eigen::MatrixXd(T.transpose() * wmu.asDiagonal() * T);
  out.sym_defect = (out.a - out.a.transpose()).norm() / out.a.norm();
  return out;
}

GridFn invert_normal(const geo::SimpleManifold2D& man, const BoundaryGrid& bg,
                     const RayTransformData& data, const GridSpec& gs,
                     double ridge, InvertReport* report) {
  const auto T = discrete_transform(man, bg, gs, data.lambda);
  Eigen::VectorXd wmu(bg.size());
  for (int s = 0; s < bg.size(); ++s) wmu[s] = bg.s[s].w * bg.s[s].mu;
  // volume weights of the grid inner product (zero outside the disk)
  Eigen::VectorXd vol = Eigen::VectorXd::Zero(gs.npoints());
  for (int i = 0; i < gs.n; ++i)
    for (int j = 0; j < gs.n; ++j) {
      const Vec2 p = gs.point(i, j);
      if (man.inside(p))
        vol[gs.id(i, j)] = std::exp(2.0 * man.phi(p)) * gs.cell();
    }

  // Op = T* T + ridge, self-adjoint PSD in the vol-weighted inner product;
  // off-disk nodes carry zero volume and are pinned by the ridge alone
  auto apply = [&](const Eigen::VectorXcd& f) -> Eigen::VectorXcd {
    Eigen::VectorXcd Tf = T * f;
    Eigen::VectorXcd back = T.transpose() * (wmu.asDiagonal() * Tf).eval();
    for (int p = 0; p < gs.npoints(); ++p)
      back[p] = (vol[p] > 0.0 ? back[p] / vol[p] : complex{}) +
                ridge * f[p];
    return back;
  };
  auto inner = [&](const Eigen::VectorXcd& u,
                   const Eigen::VectorXcd& v) -> complex {
    complex acc{};
    for (int p = 0; p < gs.npoints(); ++p)
      acc += std::conj(u[p]) * v[p] * (vol[p] > 0.0 ? vol[p] : gs.cell());
    return acc;
  };

  Eigen::VectorXcd rhs = T.transpose() * (wmu.asDiagonal() * data.values).eval();
  for (int p = 0; p < gs.npoints(); ++p)
    if (vol[p] > 0.0) rhs[p] /= vol[p];
    else rhs[p] = complex{};

  // conjugate gradients, fixed-order reductions
  Eigen::VectorXcd f = Eigen::VectorXcd::Zero(gs.npoints());
  Eigen::VectorXcd r = rhs, p = r;
  const double rhs_norm = std::sqrt(std::abs(inner(rhs, rhs)));
  double rr = std::abs(inner(r, r));
  const int cap = 10 * gs.npoints();
  int it = 0;
  const double tol = 1e-8;
  while (it < cap && std::sqrt(rr) > tol * rhs_norm) {
    const Eigen::VectorXcd Ap = apply(p);
    const complex alpha = rr / inner(p, Ap);
    f += alpha * p;
    r -= alpha * Ap;
    const double rr_new = std::abs(inner(r, r));
    p = r + (rr_new / rr) * p;
    rr = rr_new;
    ++it;
  }
  if (report) {
    report->iterations = it;
    report->rel_residual = rhs_norm > 0.0 ? std::sqrt(rr) / rhs_norm : 0.0;
    report->converged = std::sqrt(rr) <= tol * rhs_norm;
  }
  GridFn out;
  out.gs = gs;
  out.v = std::move(f);
  return out;
}

}  // namespace cgolab::xray
