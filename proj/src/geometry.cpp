#include "cgolab/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace cgolab::geo {

// ------------------------------ EigenBasis --------------------------------

Eigen::VectorXcd EigenBasis::analyze(const Eigen::VectorXcd& f) const {
  require(f.size() == npoints(), "analyze: wrong sample count");
  require(E.size() > 0, "analyze: basis built without node-value matrix");
  return cell_weight * (E.adjoint() * f);
}

Eigen::VectorXcd EigenBasis::synthesize(const Eigen::VectorXcd& c) const {
  require(c.size() == J(), "synthesize: wrong coefficient count");
  require(E.size() > 0, "synthesize: basis built without node-value matrix");
  return E * c;
}

Eigen::MatrixXcd EigenBasis::eval_at(const std::vector<Vec2>& pts) const {
  std::vector<int> all(J());
  for (int j = 0; j < J(); ++j) all[j] = j;
  return eval_modes_at(pts, all);
}

Eigen::MatrixXcd EigenBasis::eval_modes_at(const std::vector<Vec2>& pts,
                                           const std::vector<int>& which) const {
  const double a1 = 2.0 * pi / L1, a2 = 2.0 * pi / L2;
  const double scale = 1.0 / std::sqrt(L1 * L2);
  Eigen::MatrixXcd out(pts.size(), which.size());
  for (std::size_t p = 0; p < pts.size(); ++p) {
    for (std::size_t c = 0; c < which.size(); ++c) {
      const Mode& m = modes[which[c]];
      const double phase = a1 * m.k1 * pts[p].x + a2 * m.k2 * pts[p].y;
      out(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(c)) =
          scale * complex(std::cos(phase), std::sin(phase));
    }
  }
  return out;
}

EigenBasis build_flat_torus_basis(double L1, double L2, int N1, int N2,
                                  double kmax, bool with_matrix) {
  require(L1 > 0 && L2 > 0 && N1 >= 4 && N2 >= 4, "bad torus parameters");
  const double a1 = 2.0 * pi / L1, a2 = 2.0 * pi / L2;
  const int kcap1 = N1 / 2 - 1, kcap2 = N2 / 2 - 1;
  // frequency reach needed for lambda <= kmax^2
  require(a1 * kcap1 >= kmax && a2 * kcap2 >= kmax,
          "grid too coarse for requested kmax");

  EigenBasis B;
  B.L1 = L1;
  B.L2 = L2;
  B.N1 = N1;
  B.N2 = N2;
  B.cell_weight = L1 * L2 / (N1 * N2);

  const double lam_max = kmax * kmax;
  for (int k1 = -kcap1; k1 <= kcap1; ++k1)
    for (int k2 = -kcap2; k2 <= kcap2; ++k2) {
      const double lam = a1 * a1 * k1 * k1 + a2 * a2 * k2 * k2;
      if (lam <= lam_max + 1e-12) B.modes.push_back({k1, k2, lam});
    }
  std::sort(B.modes.begin(), B.modes.end(), [](const Mode& a, const Mode& b) {
    if (a.lambda != b.lambda) return a.lambda < b.lambda;
    if (a.k1 != b.k1) return a.k1 < b.k1;
    return a.k2 < b.k2;
  });

  B.lambda.resize(B.J());
  for (int j = 0; j < B.J(); ++j) B.lambda[j] = B.modes[j].lambda;

  B.nodes.reserve(static_cast<std::size_t>(N1) * N2);
  const double h1 = L1 / N1, h2 = L2 / N2;
  for (int i1 = 0; i1 < N1; ++i1)
    for (int i2 = 0; i2 < N2; ++i2) B.nodes.push_back({i1 * h1, i2 * h2});
  if (with_matrix) B.E = B.eval_at(B.nodes);
  return B;
}

// ---------------------------- SimpleManifold2D ----------------------------

SimpleManifold2D SimpleManifold2D::flat_disk(double R) {
  SimpleManifold2D M;
  M.radius = R;
  return M;
}

SimpleManifold2D SimpleManifold2D::bump_disk(double R, double amp, Vec2 center,
                                             double sigma) {
  SimpleManifold2D M;
  M.radius = R;
  M.amp_ = amp;
  M.center_ = center;
  M.sigma_ = sigma;
  return M;
}

double SimpleManifold2D::phi(Vec2 p) const {
  if (amp_ == 0.0) return 0.0;
  const Vec2 d = p - center_;
  return amp_ * std::exp(-d.dot(d) / (sigma_ * sigma_));
}

Vec2 SimpleManifold2D::grad_phi(Vec2 p) const {
  if (amp_ == 0.0) return {0.0, 0.0};
  const Vec2 d = p - center_;
  return (-2.0 / (sigma_ * sigma_)) * phi(p) * d;
}

double SimpleManifold2D::lap_phi(Vec2 p) const {
  if (amp_ == 0.0) return 0.0;
  const Vec2 d = p - center_;
  const double s2 = sigma_ * sigma_;
  return phi(p) * (4.0 * d.dot(d) / (s2 * s2) - 4.0 / s2);
}

double SimpleManifold2D::gauss_curvature(Vec2 p) const {
  return -std::exp(-2.0 * phi(p)) * lap_phi(p);
}

// ------------------------------- geodesics --------------------------------

namespace {

struct State {
  Vec2 x, v;
};

// geodesic equation of e^{2 phi} delta in coordinates:
//   x'' = -( 2 (grad phi . x') x' - |x'|^2 grad phi )
State deriv(const SimpleManifold2D& M, const State& s) {
  const Vec2 gp = M.grad_phi(s.x);
  const Vec2 acc = -(2.0 * gp.dot(s.v) * s.v - s.v.dot(s.v) * gp);
  return {s.v, acc};
}

State rk4_step(const SimpleManifold2D& M, const State& s, double h) {
  const State k1 = deriv(M, s);
  const State k2 = deriv(M, {s.x + 0.5 * h * k1.x, s.v + 0.5 * h * k1.v});
  const State k3 = deriv(M, {s.x + 0.5 * h * k2.x, s.v + 0.5 * h * k2.v});
  const State k4 = deriv(M, {s.x + h * k3.x, s.v + h * k3.v});
  return {s.x + (h / 6.0) * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
          s.v + (h / 6.0) * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v)};
}

}  // namespace

GeodesicPath integrate_geodesic(const SimpleManifold2D& M, Vec2 x0, Vec2 v0,
                                double h) {
  require(h > 0, "geodesic step must be positive");
  require(v0.norm() > 0, "geodesic needs a direction");
  // unit g-speed: |v|_g = e^{phi} |v|_e
  State s{x0, (1.0 / std::exp(M.phi(x0))) * v0.normalized()};

  GeodesicPath path;
  path.x.push_back(s.x);
  path.v.push_back(s.v);
  path.t.push_back(0.0);

  const double R = M.radius;
  const double t_cap = 200.0 * R * std::exp(2.0 * std::abs(M.phi({0, 0})));
  double t = 0.0;
  while (true) {
    State next = rk4_step(M, s, h);
    if (next.x.norm() >= R) {
      // bisect the step fraction so that |x| = R to ~1e-10
      double lo = 0.0, hi = 1.0;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        const State sm = rk4_step(M, s, h * mid);
        if (sm.x.norm() >= R)
          hi = mid;
        else
          lo = mid;
        if (hi - lo < 1e-12) break;
      }
      const State exit = rk4_step(M, s, h * hi);
      path.x.push_back(exit.x);
      path.v.push_back(exit.v);
      path.t.push_back(t + h * hi);
      return path;
    }
    s = next;
    t += h;
    path.x.push_back(s.x);
    path.v.push_back(s.v);
    path.t.push_back(t);
    require(t < t_cap, "geodesic did not exit the disk (trapped?)");
  }
}

std::vector<double> jacobi_field(const SimpleManifold2D& M,
                                 const GeodesicPath& path) {
  const std::size_t n = path.x.size();
  std::vector<double> J(n);
  J[0] = 0.0;
  double j = 0.0, jp = 1.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double h = path.t[i + 1] - path.t[i];
    const double K0 = M.gauss_curvature(path.x[i]);
    const double Km =
        M.gauss_curvature(0.5 * (path.x[i] + path.x[i + 1]));
    const double K1 = M.gauss_curvature(path.x[i + 1]);
    // RK4 on (J, J') with curvature sampled at endpoints / midpoint
    const double k1j = jp, k1p = -K0 * j;
    const double k2j = jp + 0.5 * h * k1p, k2p = -Km * (j + 0.5 * h * k1j);
    const double k3j = jp + 0.5 * h * k2p, k3p = -Km * (j + 0.5 * h * k2j);
    const double k4j = jp + h * k3p, k4p = -K1 * (j + h * k3j);
    j += (h / 6.0) * (k1j + 2 * k2j + 2 * k3j + k4j);
    jp += (h / 6.0) * (k1p + 2 * k2p + 2 * k3p + k4p);
    J[i + 1] = j;
  }
  return J;
}

// ------------------------------ warped product ----------------------------

double warped_potential(double q, double c, double dc, double d2c) {
  require(c > 0, "warping factor must be positive");
  // w = c^{-1/4}; Delta_g w = c^{-3/2} (c^{1/2} w')' for g = c(dx1^2 + g0)
  const double w1 = -0.25 * std::pow(c, -1.25) * dc;                  // w'
  const double w2 = (5.0 / 16.0) * std::pow(c, -2.25) * dc * dc -
                    0.25 * std::pow(c, -1.25) * d2c;                  // w''
  const double div = 0.5 * std::pow(c, -0.5) * dc * w1 +
                     std::pow(c, 0.5) * w2;                           // (c^{1/2} w')'
  const double lap = std::pow(c, -1.5) * div;
  return c * (q - std::pow(c, 0.25) * lap);
}

}  // namespace cgolab::geo
