#pragma once

#include <Eigen/Dense>
#include <vector>

#include "cgolab/common.hpp"

namespace cgolab::geo {

// ---------------------------------------------------------------------------
// Eigenbasis of the flat torus R^2 / (L1 Z x L2 Z).
//
// Modes are e_j(y) = exp(i (a1 k1 y1 + a2 k2 y2)) / sqrt(L1 L2) with
// a_i = 2 pi / L_i, eigenvalue lambda_j = (a1 k1)^2 + (a2 k2)^2 of -Delta.
// On the uniform N1 x N2 grid the discrete inner product with uniform cell
// weight reproduces orthonormality exactly as long as |k_i| <= N_i/2 - 1.
// ---------------------------------------------------------------------------

struct Mode {
  int k1 = 0, k2 = 0;
  double lambda = 0.0;
};

class EigenBasis {
 public:
  double L1 = 0.0, L2 = 0.0;
  int N1 = 0, N2 = 0;
  std::vector<Mode> modes;     // sorted by (lambda, k1, k2)
  Eigen::VectorXd lambda;      // eigenvalues, same order as modes
  Eigen::MatrixXcd E;          // (N1*N2) x J node values
  std::vector<Vec2> nodes;     // grid nodes, row-major (i1 slow, i2 fast)
  double cell_weight = 0.0;    // L1*L2/(N1*N2)

  int J() const { return static_cast<int>(modes.size()); }
  int npoints() const { return N1 * N2; }

  // coefficients from node values: c = E^H W f
  Eigen::VectorXcd analyze(const Eigen::VectorXcd& f) const;
  // node values from coefficients: f = E c
  Eigen::VectorXcd synthesize(const Eigen::VectorXcd& c) const;
  // evaluate all modes at arbitrary points (rows = points)
  Eigen::MatrixXcd eval_at(const std::vector<Vec2>& pts) const;
  // evaluate a subset of modes (columns in the order given)
  Eigen::MatrixXcd eval_modes_at(const std::vector<Vec2>& pts,
                                 const std::vector<int>& which) const;
};

// All modes with lambda <= kmax^2.  Fails if kmax would require frequencies
// the grid cannot represent exactly.  with_matrix=false skips the dense
// node-value matrix E (analyze/synthesize then unavailable); useful for
// large mode counts where columns are evaluated on demand instead.
EigenBasis build_flat_torus_basis(double L1, double L2, int N1, int N2,
                                  double kmax, bool with_matrix = true);

// ---------------------------------------------------------------------------
// Simple 2d manifolds: disks with a conformal metric g = e^{2 phi} delta.
// ---------------------------------------------------------------------------

class SimpleManifold2D {
 public:
  double radius = 1.0;

  static SimpleManifold2D flat_disk(double R);
  // Gaussian bump phi = amp * exp(-|p - center|^2 / sigma^2)
  static SimpleManifold2D bump_disk(double R, double amp, Vec2 center,
                                    double sigma);

  double phi(Vec2 p) const;
  Vec2 grad_phi(Vec2 p) const;
  double lap_phi(Vec2 p) const;
  // Gauss curvature K = -e^{-2 phi} Delta phi
  double gauss_curvature(Vec2 p) const;
  bool inside(Vec2 p) const { return p.norm() < radius; }
  bool is_flat() const { return amp_ == 0.0; }

 private:
  double amp_ = 0.0, sigma_ = 1.0;
  Vec2 center_{};
};

// Unit-speed geodesic of g = e^{2 phi} delta sampled at uniform parameter
// steps; the parameter is g-arclength.  The last recorded sample is the
// boundary exit point, located by bisection to ~1e-10.
struct GeodesicPath {
  std::vector<Vec2> x;        // positions, x.front() = start, x.back() = exit
  std::vector<Vec2> v;        // coordinate velocities dx/dt
  std::vector<double> t;      // parameter values, t.back() = g-length
  double length() const { return t.back(); }
};

// x0 must be inside (or on) the boundary; v0 is a direction (any nonzero
// length, rescaled internally to unit g-speed).  h is the parameter step.
GeodesicPath integrate_geodesic(const SimpleManifold2D& M, Vec2 x0, Vec2 v0,
                                double h);

// Scalar Jacobi field J'' + K(gamma(t)) J = 0, J(0)=0, J'(0)=1 along a
// previously computed path; one value per path sample.
std::vector<double> jacobi_field(const SimpleManifold2D& M,
                                 const GeodesicPath& path);

// ---------------------------------------------------------------------------
// Fan (polar normal) coordinates about a center omega for the flat metric:
// r = |p - omega|, theta = atan2 about omega.  For flat disks this is the
// exact exponential-map polar chart.
// ---------------------------------------------------------------------------

struct FanFrame {
  Vec2 omega{};
  double r(Vec2 p) const { return (p - omega).norm(); }
  double theta(Vec2 p) const {
    Vec2 d = p - omega;
    return std::atan2(d.y, d.x);
  }
  Vec2 point(double r, double th) const {
    return omega + Vec2{r * std::cos(th), r * std::sin(th)};
  }
};

// ---------------------------------------------------------------------------
// Warped product reduction.  For a metric c(x1) (dx1^2 + g0) in dimension 3,
// the conformal substitution replaces the potential q by
//   q~ = c (q - c^{1/4} Delta_g c^{-1/4}),
// where Delta_g acts on functions of x1 only.  Closed form in terms of
// c, c', c''.
// ---------------------------------------------------------------------------
double warped_potential(double q, double c, double dc, double d2c);

}  // namespace cgolab::geo
