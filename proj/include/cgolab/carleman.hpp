#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "cgolab/geometry.hpp"

namespace cgolab::car {

// ---------------------------------------------------------------------------
// Carleman multiplier m_tau(t, mu): the inverse Fourier transform of
// 1/(eta^2 + 2 i tau eta - tau^2 + mu^2).  Both poles are purely imaginary,
// so the result is real: one-sided exponentials (tau > mu puts both on the
// same side), and a double pole t e^{tau t} 1_{t<0} at mu = 0.
// Satisfies (d^2/dt^2 - 2 tau d/dt + tau^2 - mu^2) m = -delta.
// Rejects |tau| = mu (resonance).
// ---------------------------------------------------------------------------
double m_tau(double tau, double mu, double t);

// ---------------------------------------------------------------------------
// Product cylinder I x T^2: uniform x1 grid on [xa, xb] tensored with a
// torus eigenbasis.  Fields live as coefficient matrices C (Nx rows, one
// per x1 node; J columns, one per transverse mode).
// ---------------------------------------------------------------------------
struct ProductCylinder {
  double xa = -1.0, xb = 1.0;
  int Nx = 0;
  geo::EigenBasis basis;

  double h1() const { return (xb - xa) / (Nx - 1); }
  double x1(int i) const { return xa + i * h1(); }
  // trapezoid weights over [xa, xb]
  Eigen::VectorXd x1_weights() const;
};

using Field = Eigen::MatrixXcd;  // Nx x J

struct CarlemanParams {
  double tau = 0.0;
  // admissibility guard: min_j |tau^2 - lambda_j| >= delta_spec
  double delta_spec = 0.0;  // 0 -> default 1e-3 * (1 + |tau|)
  // cutoff chi sampled on the x1 grid; empty means chi == 1
  Eigen::VectorXd chi;

  double guard() const {
    return delta_spec > 0 ? delta_spec : 1e-3 * (1.0 + std::abs(tau));
  }
  bool admissible(const geo::EigenBasis& B) const;
};

// smooth cutoff: 1 on [xa+margin, xb-margin], quintic roll-off to 0 at ends
Eigen::VectorXd make_chi(const ProductCylinder& cyl, double margin);

// e^{tau x1} Delta_g e^{-tau x1}: per mode d^2/dx1^2 - 2 tau d/dx1
//   + tau^2 - lambda_j, 4th-order centered differences in x1 (lower order
// at the few boundary rows; callers keep inputs interior-supported).
Field conjugated_laplacian(const ProductCylinder& cyl, double tau,
                           const Field& u);

// Inverse of e^{tau x1} (-Delta_g) e^{-tau x1}: per-mode convolution of the
// coefficients with m_tau(., sqrt(lambda_j)) (input extended by zero outside
// the grid), then multiplied by the cutoff.  Product-integration weights
// against the cubic interpolation cardinal make the quadrature exact for
// piecewise-cubic coefficients (4th order), uniformly in the kernel
// stiffness.  Fails on non-admissible tau.
Field apply_G_tau(const ProductCylinder& cyl, const Field& f,
                  const CarlemanParams& params);

// cardinal function of 4-point Lagrange interpolation (support |u| < 2h)
double cubic_cardinal(double u, double h);

// quadrature weights W(d) = int m_tau(d h - u, mu) C_h(u) du for the
// discrete convolution out(i) = sum_d W(d) c(i - d); exposed for testing
std::vector<double> kernel_weights(double tau, double mu, double h, int dmin,
                                   int dmax);

// ------------------------------- norms ------------------------------------

// L2 on the cylinder via Parseval per x1 slice + trapezoid in x1
double l2_norm(const ProductCylinder& cyl, const Field& u);
// H1 = (L2^2 + ||d/dx1 u||^2 + sum_j lambda_j ||c_j||^2)^{1/2}
double h1_norm(const ProductCylinder& cyl, const Field& u);
// general Lp by pointwise synthesis on the tensor grid; p in [1, inf],
// p = inf means the max norm; rejects p < 1
double lp_norm(const ProductCylinder& cyl, const Field& u, double p);
// Lp of a transverse function given by coefficients c against the basis
double lp_norm_transverse(const geo::EigenBasis& B, const Eigen::VectorXcd& c,
                          double p);

// 4th-order d/dx1 of the coefficient matrix
Field deriv_x1(const ProductCylinder& cyl, const Field& u);

// slice-wise change of representation between point values on the tensor
// grid (Nx x Npts, torus nodes row-major) and coefficients (Nx x J)
Field analyze_slices(const ProductCylinder& cyl,
                     const Eigen::MatrixXcd& values);
Eigen::MatrixXcd synthesize_slices(const ProductCylinder& cyl,
                                   const Field& u);
// analysis against an explicit basis (e.g. a finer quadrature grid than
// the working one, for fields whose sharp features would otherwise alias)
Field analyze_on(const geo::EigenBasis& B, const Eigen::MatrixXcd& values);
// Lp of a pointwise field on the tensor grid (p in [1, inf])
double pointwise_lp(const ProductCylinder& cyl,
                    const Eigen::MatrixXcd& values, double p);

// --------------------------- spectral clusters ----------------------------

struct SpectralCluster {
  int k = 0;
  std::vector<int> indices;  // {j : k <= sqrt(lambda_j) < k+1}
};

// partition of all retained modes
std::vector<SpectralCluster> spectral_clusters(const geo::EigenBasis& B);

struct ClusterRow {
  int k = 0;
  int size = 0;
  double sogge_ratio = 0.0;  // max ||chi_k u||_L6 / ((1+k)^{1/6} ||u||_L2)
  double dual_ratio = 0.0;   // max ||chi_k u||_L2 / ((1+k)^{1/6} ||u||_L6/5)
};

// random-trial verification of the cluster estimates on the base torus
std::vector<ClusterRow> verify_cluster_estimates(const geo::EigenBasis& B,
                                                 int trials,
                                                 std::uint64_t seed);

// ---------------------------- estimate sweep ------------------------------

struct SweepRow {
  double tau = 0.0;
  bool admissible = true;
  double l2_ratio = 0.0;   // max |tau| ||G f||_L2 / ||f||_L2
  double h1_ratio = 0.0;   // max ||G f||_H1 / ||f||_L2
  double lp_ratio = 0.0;   // max ||G f||_L6 / ||f||_L6/5
  double inv_ratio = 0.0;  // max ||u||_L2 / ||conj. Laplacian u||_L2
};

// random interior-supported smooth test field (smooth compact bump in x1
// times random mode amplitudes)
Field make_test_field(const ProductCylinder& cyl, int nmodes,
                      std::uint64_t seed);

// measures the Prop-2.1-style operator ratios and the conjugated a-priori
// inequality over random interior-supported inputs; non-admissible taus are
// recorded with the flag cleared and skipped
std::vector<SweepRow> verify_carleman_sweep(const ProductCylinder& cyl,
                                            const std::vector<double>& taus,
                                            int trials, std::uint64_t seed);

}  // namespace cgolab::car
