#pragma once

// Independent numerical oracles used by the test suites.  These deliberately
// avoid the code paths under test: the multiplier oracle integrates the
// defining frequency-domain integral directly.

#include <cmath>
#include <complex>
#include <functional>

#include "cgolab/common.hpp"

namespace oracles {

using cgolab::complex;
using cgolab::pi;

// adaptive Simpson for complex integrands
inline complex adaptive_simpson(const std::function<complex(double)>& f,
                                double a, double b, double tol, int depth,
                                complex fa, complex fm, complex fb,
                                complex whole) {
  const double m = 0.5 * (a + b);
  const complex flm = f(0.5 * (a + m)), frm = f(0.5 * (m + b));
  const complex left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const complex right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adaptive_simpson(f, a, m, 0.5 * tol, depth - 1, fa, flm, fm, left) +
         adaptive_simpson(f, m, b, 0.5 * tol, depth - 1, fm, frm, fb, right);
}

inline complex integrate(const std::function<complex(double)>& f, double a,
                         double b, double tol) {
  const complex fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const complex whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson(f, a, b, tol, 40, fa, fm, fb, whole);
}

// Numerical evaluation of (1/2pi) int e^{i t eta} / (eta^2 + 2 i tau eta
// - tau^2 + mu^2) d eta.  The integrand decays only like eta^{-2}, so the
// first three terms of the large-eta expansion are subtracted and added
// back through their elementary closed-form transforms; the remainder is
// O(eta^{-5}) and a finite window suffices.
inline double m_tau_quadrature(double tau, double mu, double t) {
  const double a2 = tau * tau + mu * mu;
  const double a = std::sqrt(a2);
  const complex I(0.0, 1.0);

  auto A = [&](double e) { return 1.0 / (e * e + a2); };
  auto d = [&](double e) { return 2.0 * I * tau * e - 2.0 * tau * tau; };
  auto g = [&](double e) {
    return 1.0 / (e * e + 2.0 * I * tau * e - tau * tau + mu * mu);
  };
  auto s = [&](double e) {
    const double Ae = A(e);
    const complex de = d(e);
    return Ae - de * Ae * Ae + de * de * Ae * Ae * Ae;
  };
  auto integrand = [&](double e) {
    return std::exp(I * t * e) * (g(e) - s(e));
  };

  // window: the remainder is ~ 8 tau^3 / eta^5
  const double H = std::max(1500.0, 20.0 * a);
  complex num = 0.0;
  const double seg = 2.0;
  const int nseg = static_cast<int>(std::ceil(2.0 * H / seg));
  for (int q = 0; q < nseg; ++q) {
    const double lo = -H + 2.0 * H * q / nseg;
    const double hi = -H + 2.0 * H * (q + 1) / nseg;
    num += integrate(integrand, lo, hi, 1e-10 / nseg);
  }

  // exact transforms with the (1/2pi) int e^{i t eta} convention:
  //   A            -> e^{-a|t|} / (2a)
  //   A^2          -> (1 + a|t|) e^{-a|t|} / (4 a^3)
  //   A^3          -> (3 + 3a|t| + a^2 t^2) e^{-a|t|} / (16 a^5)
  //   eta A^2      -> (i t / (4a)) e^{-a|t|}
  //   eta A^3      -> (i t / 4) (1 + a|t|) e^{-a|t|} / (4 a^3)
  //   eta^2 A^3    -> F[A^2] - a^2 F[A^3]
  const double at = a * std::abs(t), ex = std::exp(-at);
  const complex FA = ex / (2.0 * a);
  const complex FA2 = (1.0 + at) * ex / (4.0 * a2 * a);
  const complex FA3 = (3.0 + 3.0 * at + at * at) * ex / (16.0 * a2 * a2 * a);
  const complex FeA2 = I * t * ex / (4.0 * a);
  const complex FeA3 = (I * t / 4.0) * (1.0 + at) * ex / (4.0 * a2 * a);
  const complex Fe2A3 = FA2 - a2 * FA3;

  // s = A - (2 i tau eta - 2 tau^2) A^2
  //       + (-4 tau^2 eta^2 - 8 i tau^3 eta + 4 tau^4) A^3
  const double t2 = tau * tau;
  const complex S = FA - (2.0 * I * tau * FeA2 - 2.0 * t2 * FA2) +
                    (-4.0 * t2 * Fe2A3 - 8.0 * I * t2 * tau * FeA3 +
                     4.0 * t2 * t2 * FA3);

  const complex total = num / (2.0 * pi) + S;
  return total.real();
}

}  // namespace oracles
