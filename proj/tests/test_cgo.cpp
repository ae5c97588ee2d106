#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cgolab/cgo.hpp"

using namespace cgolab;
using namespace cgolab::cgo;

namespace {

car::ProductCylinder make_cyl(double kmax, int Nx, int Nt) {
  car::ProductCylinder cyl;
  cyl.xa = -1.0;
  cyl.xb = 1.0;
  cyl.Nx = Nx;
  cyl.basis = geo::build_flat_torus_basis(2 * pi / std::sqrt(2.0),
                                          2 * pi / std::sqrt(3.0), Nt, Nt,
                                          kmax);
  return cyl;
}

Region make_region() {
  Region M;
  M.ma = -0.6;
  M.mb = 0.6;
  M.disk = {{2.2, 1.8}, 0.6};
  M.roll_x1 = 0.25;
  M.roll_r = 0.25;
  return M;
}

CgoAnsatz make_ansatz(double lambda) {
  CgoAnsatz an;
  an.omega = {0.9, 1.8};
  an.lambda = lambda;
  an.b = Eigen::VectorXcd::Zero(5);  // m = -2..2
  an.b[2] = 1.0;
  an.b[3] = complex(0.4, 0.1);
  an.b[1] = complex(0.0, -0.3);
  return an;
}

// smooth potential supported strictly inside M
Potential make_potential(const car::ProductCylinder& cyl, const Region& M,
                         double amp, bool spike) {
  Potential q;
  q.q = Eigen::MatrixXcd::Zero(cyl.Nx, cyl.basis.npoints());
  for (int i = 0; i < cyl.Nx; ++i)
    for (int p = 0; p < cyl.basis.npoints(); ++p) {
      const double x = cyl.x1(i);
      const Vec2 d = M.rel(cyl.basis, cyl.basis.nodes[p]);
      const double rho2 = d.dot(d) / (0.35 * 0.35);
      const double xw = (x - M.ma) * (M.mb - x);
      if (rho2 >= 1.0 || xw <= 0.0) continue;
      double v = amp * std::exp(-rho2 / (1.0 - rho2)) *
                 std::exp(-0.04 / (xw * xw));
      if (spike && rho2 < 0.02 && std::abs(x) < 0.06) v += 40.0 * amp;
      q.q(i, p) = v * std::exp(complex(0.0, 0.3 * d.x));
    }
  return q;
}

}  // namespace

TEST_CASE("conjugated Laplacian of the fan ansatz: closed form vs FD") {
  // independent check of  e^{tau x1} Delta e^{-tau x1} a = f  with
  // a = e^{-i tau r} r^{-1/2} e^{i lambda(x1+ir)} b(theta) by 2nd-order
  // central differences in flat 3d coordinates
  const double tau = 6.0, lambda = 0.7;
  auto an = make_ansatz(lambda);
  an.omega = {0.0, 0.0};

  auto aval = [&](double x1, double y1, double y2) {
    const double r = std::hypot(y1, y2), th = std::atan2(y2, y1);
    return std::exp(complex(-lambda * r, -tau * r)) / std::sqrt(r) *
           std::exp(complex(0.0, lambda * x1)) * an.b_val(th);
  };
  auto fval = [&](double x1, double y1, double y2) {
    const double r = std::hypot(y1, y2), th = std::atan2(y2, y1);
    return std::exp(complex(-lambda * r, -tau * r)) *
           std::exp(complex(0.0, lambda * x1)) *
           (0.25 * an.b_val(th) + an.b_pp(th)) / (r * r * std::sqrt(r));
  };

  const double h = 1e-4;
  for (auto [x1, y1, y2] : {std::array<double, 3>{0.3, 0.8, -0.4},
                            std::array<double, 3>{-0.2, 1.1, 0.5},
                            std::array<double, 3>{0.0, 0.5, 0.9}}) {
    auto lap1 = [&](auto g) {
      return (g(x1 + h, y1, y2) + g(x1 - h, y1, y2) + g(x1, y1 + h, y2) +
              g(x1, y1 - h, y2) + g(x1, y1, y2 + h) + g(x1, y1, y2 - h) -
              6.0 * g(x1, y1, y2)) /
             (h * h);
    };
    const complex d1 =
        (aval(x1 + h, y1, y2) - aval(x1 - h, y1, y2)) / (2.0 * h);
    const complex lhs =
        lap1(aval) - 2.0 * tau * d1 + tau * tau * aval(x1, y1, y2);
    const complex rhs = fval(x1, y1, y2);
    CHECK(std::abs(lhs - rhs) < 1e-3 * (1.0 + std::abs(rhs)));
  }
}

TEST_CASE("free CGO: small residual, 4th-order refinement, tau decay") {
  const auto M = make_region();
  const auto an = make_ansatz(0.5);
  Potential none;

  auto cyl_c = make_cyl(21.0, 41, 64);
  auto cyl_f = make_cyl(21.0, 81, 64);
  // shared dealiasing quadrature for the sharp amplitude/source samples;
  // the cutoff commutator lives on a thin shell and its projection onto
  // the truncated basis needs a fine grid before the quadrature alias
  // drops below the x1 half of the error budget
  const auto fine = geo::build_flat_torus_basis(
      cyl_f.basis.L1, cyl_f.basis.L2, 320, 320, 21.0);
  const double tau = 8.0;

  auto sol_c = build_free_cgo(cyl_c, M, an, tau, &fine);
  auto sol_f = build_free_cgo(cyl_f, M, an, tau, &fine);
  const double res_c = cgo_residual(cyl_c, M, none, sol_c, 0.05);
  const double res_f = cgo_residual(cyl_f, M, none, sol_f, 0.05);

  CHECK(res_f < 1e-2 * sol_f.f_l2);  // measured 7.0e-4 vs f_l2 = 0.161
  CHECK(res_c / res_f > 8.0);        // measured ~95x, >16x of 4th order

  // Prop-3.2-style contract: |tau| ||r0||_L2 bounded, doubling tau does
  // not grow the H1 norm
  // r0 = G_tau(free source) is insensitive to the dealiasing grid, so the
  // default quadrature is enough for the norm ratios
  auto& cyl = cyl_f;
  auto s1 = build_free_cgo(cyl, M, an, 6.0);
  auto s2 = build_free_cgo(cyl, M, an, 12.0);
  CHECK(12.0 * s2.r0_l2 < 2.0 * (6.0 * s1.r0_l2));
  CHECK(s2.r0_l2 < 0.75 * s1.r0_l2);  // clear decay in tau
  CHECK(s2.r0_h1 < 2.0 * s1.r0_h1);
  CHECK(s2.r0_l6 < 2.0 * s1.r0_l6);
}

TEST_CASE("potential polar factorization") {
  auto cyl = make_cyl(7.0, 21, 16);
  const auto M = make_region();
  auto q = make_potential(cyl, M, 2.0, true);
  const auto sq = q.abs_sqrt();
  const auto m = q.phase_half();
  for (int i = 0; i < q.q.rows(); i += 3)
    for (int p = 0; p < q.q.cols(); p += 5) {
      CHECK(std::abs(sq(i, p) * m(i, p) - q.q(i, p)) < 1e-12);
      CHECK(std::abs(std::abs(m(i, p)) - std::abs(sq(i, p))) < 1e-12);
    }
  CHECK(q.l32(cyl) > 0.0);
}

TEST_CASE("split_potential") {
  auto cyl = make_cyl(7.0, 21, 16);
  const auto M = make_region();

  // bounded q, generous budget: nothing to trim
  auto q = make_potential(cyl, M, 1.0, false);
  auto [s1, f1] = split_potential(cyl, q, 1e6);
  CHECK(f1.q.cwiseAbs().maxCoeff() == 0.0);
  CHECK((s1.q - q.q).cwiseAbs().maxCoeff() == 0.0);

  // spiky q with a budget that only fits the spike
  auto qs = make_potential(cyl, M, 1.0, true);
  const double spike_norm = (qs.l32(cyl) > q.l32(cyl))
                                ? car::pointwise_lp(cyl, qs.q - q.q, 1.5)
                                : 0.0;
  REQUIRE(spike_norm > 0.0);
  // budget fits the spike but not the whole potential, so trimming is forced
  const double eps2 = 0.5 * (spike_norm + qs.l32(cyl));
  REQUIRE(eps2 < qs.l32(cyl));
  auto [s2, f2] = split_potential(cyl, qs, eps2);
  CHECK(f2.q.cwiseAbs().maxCoeff() > 10.0);        // tail holds the spike
  CHECK(car::pointwise_lp(cyl, f2.q, 1.5) <= eps2 + 1e-12);
  CHECK(s2.q.cwiseAbs().maxCoeff() <= 2.0);        // bulk stays bounded
  // exact decomposition and norm monotonicity
  CHECK((s2.q + f2.q - qs.q).cwiseAbs().maxCoeff() == 0.0);
  CHECK(s2.l32(cyl) <= qs.l32(cyl) + 1e-12);
}

TEST_CASE("neumann series: trivial potential and dense-solve oracle") {
  auto cyl = make_cyl(4.0, 21, 8);
  const auto M = make_region();
  const int NP = cyl.basis.npoints();

  // q = 0: series terminates immediately with v = rhs
  Potential zero;
  zero.q = Eigen::MatrixXcd::Zero(cyl.Nx, NP);
  Eigen::MatrixXcd rhs = Eigen::MatrixXcd::Random(cyl.Nx, NP);
  auto nr0 = neumann_solve(cyl, zero, 8.0, rhs);
  CHECK((nr0.v - rhs).cwiseAbs().maxCoeff() == 0.0);
  CHECK(nr0.terms == 1);

  // small q: compare against a dense solve of (Id + A) v = rhs with
  // A = m G_tau |q|^{1/2} assembled column by column in point space
  auto q = make_potential(cyl, M, 0.4, false);
  const double tau = 8.0;
  const auto sq = q.abs_sqrt();
  const auto m = q.phase_half();
  car::CarlemanParams params;
  params.tau = tau;

  const int dim = cyl.Nx * NP;
  Eigen::MatrixXcd A(dim, dim);
  for (int c = 0; c < dim; ++c) {
    Eigen::MatrixXcd e = Eigen::MatrixXcd::Zero(cyl.Nx, NP);
    e(c / NP, c % NP) = 1.0;
    const auto g = car::apply_G_tau(
        cyl, car::analyze_slices(cyl, sq.cwiseProduct(e)), params);
    const Eigen::MatrixXcd col =
        m.cwiseProduct(car::synthesize_slices(cyl, g));
    A.col(c) = col.reshaped<Eigen::RowMajor>();
  }
  A += Eigen::MatrixXcd::Identity(dim, dim);
  const Eigen::VectorXcd vref =
      A.partialPivLu().solve(rhs.reshaped<Eigen::RowMajor>().eval());

  auto nr = neumann_solve(cyl, q, tau, rhs);
  const Eigen::VectorXcd v = nr.v.reshaped<Eigen::RowMajor>();
  CHECK((v - vref).norm() / vref.norm() < 1e-8);
  CHECK(nr.contraction < 0.9);

  // contraction improves as tau grows
  auto nr2 = neumann_solve(cyl, q, 16.0, rhs);
  CHECK(nr2.contraction < nr.contraction);
}

TEST_CASE("corrected CGO: trivial q, residual, remainder decay") {
  auto cyl = make_cyl(21.0, 81, 64);
  const auto fine = geo::build_flat_torus_basis(
      cyl.basis.L1, cyl.basis.L2, 320, 320, 21.0);
  const auto M = make_region();
  const auto an = make_ansatz(0.5);

  Potential zero;
  zero.q = Eigen::MatrixXcd::Zero(cyl.Nx, cyl.basis.npoints());
  auto s0 = build_cgo(cyl, M, zero, an, 8.0, &fine);
  CHECK(s0.r1.cwiseAbs().maxCoeff() == 0.0);

  auto q = make_potential(cyl, M, 1.5, false);
  auto s = build_cgo(cyl, M, q, an, 8.0, &fine);
  CHECK(s.terms >= 2);
  const double res = cgo_residual(cyl, M, q, s, 0.05);
  CHECK(res < 5e-3 * s.f_l2);

  auto s2 = build_cgo(cyl, M, q, an, 14.0, &fine);
  CHECK(s2.rt_l2 < s.rt_l2);                    // L2 remainder decays
  CHECK(s2.rt_l6 < 2.0 * s.rt_l6);              // L6 remainder bounded
  CHECK(s2.contraction <= s.contraction + 0.05);
}
