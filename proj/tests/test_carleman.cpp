#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cgolab/carleman.hpp"
#include "oracles.hpp"

using namespace cgolab;
using namespace cgolab::car;

namespace {

ProductCylinder small_cylinder(double kmax = 5.0, int Nx = 161) {
  ProductCylinder cyl;
  cyl.xa = -1.0;
  cyl.xb = 1.0;
  cyl.Nx = Nx;
  cyl.basis = geo::build_flat_torus_basis(2 * pi / std::sqrt(2.0),
                                          2 * pi / std::sqrt(3.0), 16, 16,
                                          kmax);
  return cyl;
}

}  // namespace

TEST_CASE("m_tau closed form: reference values") {
  // tau=4, mu=2, t=-1: both poles on the lower side
  CHECK(m_tau(4.0, 2.0, -1.0) ==
        doctest::Approx(0.25 * (std::exp(-6.0) - std::exp(-2.0)))
            .epsilon(1e-12));
  // same parameters, t=+1: vanishes
  CHECK(m_tau(4.0, 2.0, 1.0) == 0.0);
  // double pole at mu=0
  CHECK(m_tau(4.0, 0.0, -1.0) ==
        doctest::Approx(-std::exp(-4.0)).epsilon(1e-12));
  CHECK_THROWS(m_tau(3.0, 3.0, 0.5));
}

TEST_CASE("m_tau matches the frequency-integral oracle") {
  for (double tau : {1.5, 4.0, -4.0, 7.25})
    for (double mu : {0.0, 0.8, 2.0, 6.5})
      for (double t : {-1.7, -0.4, 0.3, 1.1}) {
        if (std::abs(std::abs(tau) - mu) < 0.3) continue;
        CHECK(m_tau(tau, mu, t) ==
              doctest::Approx(oracles::m_tau_quadrature(tau, mu, t))
                  .epsilon(0.0)
                  .scale(1.0)  // absolute comparison
                  .epsilon(1e-8));
      }
}

TEST_CASE("m_tau solves the mode ODE with a unit kink") {
  const double tau = 5.0, mu = 3.0, h = 1e-5;
  auto m = [&](double t) { return m_tau(tau, mu, t); };
  // homogeneous away from zero
  for (double t : {-0.8, -0.2, 0.4}) {
    const double m2 = (m(t + h) - 2 * m(t) + m(t - h)) / (h * h);
    const double m1 = (m(t + h) - m(t - h)) / (2 * h);
    CHECK(std::abs(m2 - 2 * tau * m1 + (tau * tau - mu * mu) * m(t)) < 1e-4);
  }
  // derivative jump of -1 across t = 0
  const double dp = (m(2 * h) - m(h)) / h;
  const double dm = (m(-h) - m(-2 * h)) / h;
  CHECK(dp - dm == doctest::Approx(-1.0).epsilon(1e-3));
}

TEST_CASE("m_tau decay bound") {
  for (double tau : {2.0, 5.0, 9.0})
    for (double mu : {0.5, 1.5, 4.0, 8.0}) {
      if (std::abs(tau - mu) < 1e-9) continue;
      for (double t = -3.0; t <= 3.0; t += 0.37) {
        const double bound =
            (1.0 / mu) * std::exp(-std::abs(tau - mu) * std::abs(t));
        CHECK(std::abs(m_tau(tau, mu, t)) <= bound + 1e-15);
      }
    }
}

TEST_CASE("kernel weights match fine quadrature of the cardinal integral") {
  const double tau = 6.0, mu = 2.5, h = 0.02;
  auto W = kernel_weights(tau, mu, h, -40, 3);
  for (int d : {-40, -7, -1, 0, 1, 2, 3}) {
    // composite Simpson at very fine resolution, split at the kinks
    auto piece = [&](double a, double b) {
      const int n = 4000;
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        const double u0 = a + (b - a) * i / n, u1 = a + (b - a) * (i + 1) / n;
        const double um = 0.5 * (u0 + u1);
        auto f = [&](double u) {
          return m_tau(tau, mu, d * h - u) * cubic_cardinal(u, h);
        };
        s += (u1 - u0) / 6.0 * (f(u0) + 4.0 * f(um) + f(u1));
      }
      return s;
    };
    double ref = 0.0;
    for (int p = -2; p < 2; ++p) ref += piece(p * h, (p + 1) * h);
    CHECK(W[d + 40] == doctest::Approx(ref).epsilon(1e-10));
  }
  // cardinal properties: unit mass, interpolation at nodes
  CHECK(cubic_cardinal(0.0, h) == doctest::Approx(1.0));
  CHECK(cubic_cardinal(h, h) == doctest::Approx(0.0));
  CHECK(cubic_cardinal(2 * h, h) == doctest::Approx(0.0));
}

TEST_CASE("conjugated laplacian symbol") {
  auto cyl = small_cylinder();
  const double tau = 8.0;

  // constant in x1 on a single mode: output = (tau^2 - lambda_j) u
  for (int j : {0, 3, cyl.basis.J() - 1}) {
    Field u = Field::Zero(cyl.Nx, cyl.basis.J());
    u.col(j).setConstant(1.0);
    Field out = conjugated_laplacian(cyl, tau, u);
    for (int i = 0; i < cyl.Nx; ++i)
      CHECK(std::abs(out(i, j) - (tau * tau - cyl.basis.lambda[j])) < 1e-9);
  }

  // e^{i x1} profile: symbol -1 - 2 i tau + tau^2 - lambda (interior rows)
  const int j = 2;
  Field u = Field::Zero(cyl.Nx, cyl.basis.J());
  for (int i = 0; i < cyl.Nx; ++i)
    u(i, j) = std::exp(complex(0.0, cyl.x1(i)));
  Field out = conjugated_laplacian(cyl, tau, u);
  const complex sym =
      complex(-1.0, -2.0 * tau) + tau * tau - cyl.basis.lambda[j];
  for (int i = 4; i < cyl.Nx - 4; ++i)
    CHECK(std::abs(out(i, j) - sym * u(i, j)) < 1e-6);
}

TEST_CASE("G_tau left inverse: G (e^{tau x1} (-Delta) e^{-tau x1} u) = u") {
  auto cyl = small_cylinder();
  CarlemanParams params;
  params.tau = 8.0;
  REQUIRE(params.admissible(cyl.basis));

  const Field u = make_test_field(cyl, 10, 42);
  const Field f = conjugated_laplacian(cyl, params.tau, u);
  const Field g = apply_G_tau(cyl, f, params);
  CHECK(l2_norm(cyl, g + u) / l2_norm(cyl, u) < 1e-3);  // G inverts -Delta
}

TEST_CASE("G_tau of a delta slice samples the kernel") {
  auto cyl = small_cylinder();
  CarlemanParams params;
  params.tau = 8.0;
  const int j = 5, i0 = cyl.Nx / 2;
  const double mu = std::sqrt(cyl.basis.lambda[j]);

  Field f = Field::Zero(cyl.Nx, cyl.basis.J());
  f(i0, j) = 1.0;  // a hat of mass h at x_{i0}
  Field g = apply_G_tau(cyl, f, params);
  // the discrete response is the kernel mollified by the width-2h cardinal,
  // which has vanishing moments through order 3: the bias is O(h^5 m'''')
  const double bias = 2.0 * std::pow(cyl.h1(), 5) *
                      std::pow(params.tau + mu, 4) / (2.0 * mu);
  for (int i = 10; i < cyl.Nx - 10; ++i) {
    if (std::abs(i - i0) < 3) continue;
    const double ref = m_tau(params.tau, mu, cyl.x1(i) - cyl.x1(i0)) * cyl.h1();
    CHECK(std::abs(g(i, j) - ref) < bias + 1e-14);
  }
  // linearity: zero in, zero out
  Field z = apply_G_tau(cyl, Field::Zero(cyl.Nx, cyl.basis.J()), params);
  CHECK(z.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("G_tau rejects non-admissible tau") {
  auto cyl = small_cylinder();
  CarlemanParams params;
  params.tau = std::sqrt(2.0);  // tau^2 = 2 = lambda of mode (1,0)
  CHECK_THROWS(apply_G_tau(cyl, Field::Zero(cyl.Nx, cyl.basis.J()), params));
}

TEST_CASE("norms: Parseval consistency and closed-form values") {
  // unit-length interval, standard (2pi, 2pi) torus
  ProductCylinder cyl;
  cyl.xa = 0.0;
  cyl.xb = 1.0;
  cyl.Nx = 101;
  cyl.basis = geo::build_flat_torus_basis(2 * pi, 2 * pi, 16, 16, 4.0);

  // u == 1: L2 norm = sqrt(|I| * area) = 2 pi.  The constant mode has
  // height 1/(2 pi), so the unit function has coefficient 2 pi.
  Field u = Field::Zero(cyl.Nx, cyl.basis.J());
  u.col(0).setConstant(2.0 * pi);
  CHECK(l2_norm(cyl, u) == doctest::Approx(2.0 * pi).epsilon(1e-10));
  CHECK(lp_norm(cyl, u, 2.0) == doctest::Approx(2.0 * pi).epsilon(1e-8));

  // single mode: sqrt(|I|) = 1
  Field v = Field::Zero(cyl.Nx, cyl.basis.J());
  v.col(7).setConstant(1.0);
  CHECK(l2_norm(cyl, v) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(lp_norm(cyl, v, 2.0) == doctest::Approx(1.0).epsilon(1e-8));

  // quadrature L2 equals coefficient l2 on random fields
  const Field w = make_test_field(cyl, 12, 7);
  CHECK(lp_norm(cyl, w, 2.0) ==
        doctest::Approx(l2_norm(cyl, w)).epsilon(1e-8));

  // triangle inequality spot checks
  const Field w2 = make_test_field(cyl, 12, 8);
  for (double p : {1.0, 2.0, 6.0})
    CHECK(lp_norm(cyl, w + w2, p) <=
          lp_norm(cyl, w, p) + lp_norm(cyl, w2, p) + 1e-12);
  CHECK_THROWS(lp_norm(cyl, w, 0.5));
}

TEST_CASE("h1 norm on a single oscillating mode") {
  auto cyl = small_cylinder(5.0, 201);
  const int j = 4;
  const double om = 2.0, lam = cyl.basis.lambda[j];
  Field u = Field::Zero(cyl.Nx, cyl.basis.J());
  for (int i = 0; i < cyl.Nx; ++i)
    u(i, j) = std::exp(complex(0.0, om * cyl.x1(i)));
  const double L = cyl.xb - cyl.xa;
  const double ref = std::sqrt((1.0 + om * om + lam) * L);
  CHECK(h1_norm(cyl, u) == doctest::Approx(ref).epsilon(1e-8));
}

TEST_CASE("spectral clusters partition the modes") {
  // standard unit torus: cluster k=1 holds |k|^2 in {1,2,3}: 8 modes
  auto B = geo::build_flat_torus_basis(2 * pi, 2 * pi, 24, 24, 9.5);
  auto cl = spectral_clusters(B);
  CHECK(cl[0].indices.size() == 1);  // just the constant
  CHECK(cl[1].indices.size() == 8);
  std::size_t total = 0;
  for (const auto& c : cl) total += c.indices.size();
  CHECK(total == static_cast<std::size_t>(B.J()));
  // membership is by floor(sqrt(lambda))
  for (const auto& c : cl)
    for (int j : c.indices) {
      CHECK(std::sqrt(B.lambda[j]) >= c.k);
      CHECK(std::sqrt(B.lambda[j]) < c.k + 1);
    }
}

TEST_CASE("cluster estimate ratios stay bounded") {
  auto B = geo::build_flat_torus_basis(2 * pi / std::sqrt(2.0),
                                       2 * pi / std::sqrt(3.0), 32, 32, 9.0);
  auto rows = verify_cluster_estimates(B, 4, 2024);
  double lo = 1e300, hi = 0.0;
  for (const auto& r : rows) {
    if (r.size == 0) continue;
    CHECK(r.sogge_ratio > 0.0);
    lo = std::min(lo, r.sogge_ratio);
    hi = std::max(hi, r.sogge_ratio);
  }
  CHECK(hi / lo < 3.0);
}

TEST_CASE("sweep flags non-admissible tau and reports finite ratios") {
  auto cyl = small_cylinder(5.0, 121);
  auto rows = verify_carleman_sweep(cyl, {8.0, std::sqrt(3.0)}, 1, 99);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].admissible);
  CHECK(rows[0].l2_ratio > 0.0);
  CHECK(rows[0].h1_ratio > 0.0);
  CHECK(rows[0].lp_ratio > 0.0);
  CHECK(rows[0].inv_ratio > 0.0);
  CHECK_FALSE(rows[1].admissible);  // tau^2 = 3 is an eigenvalue
}
