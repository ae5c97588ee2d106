#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <functional>
#include <vector>

#include "cgolab/geometry.hpp"

namespace cgolab::xray {

// ---------------------------------------------------------------------------
// Attenuated geodesic ray transform on a simple 2d disk M0:
//   T f(x, xi) = int_0^{tau(x,xi)} f(gamma_t) e^{-lam t} dt
// over inward boundary directions, its adjoint, the Santalo quadratures,
// the two-point kernel of the normal operator, and ridge-regularized
// inversion of the normal equations.
// ---------------------------------------------------------------------------

// uniform Cartesian grid over the bounding square [-R, R]^2; functions are
// zero-extended outside the disk
struct GridSpec {
  int n = 0;
  double R = 0.0;

  double h() const { return 2.0 * R / (n - 1); }
  int npoints() const { return n * n; }
  int id(int i, int j) const { return i * n + j; }
  Vec2 point(int i, int j) const {
    return {-R + h() * i, -R + h() * j};
  }
  double cell() const { return h() * h(); }
};

struct GridFn {
  GridSpec gs;
  Eigen::VectorXcd v;

  complex interp(Vec2 p) const;  // bilinear, zero outside the square
};

// L^2(M0, dV_g) inner product of grid functions (cell quadrature with the
// conformal volume factor)
complex grid_inner(const geo::SimpleManifold2D& man, const GridFn& a,
                   const GridFn& b);

// ---------------------------------------------------------------------------
// Inward boundary-direction grid: a (beta, alpha) rectangle where beta
// parameterizes the boundary circle and alpha the g-angle from the inward
// normal.  Tangential directions |cos alpha| < margin are excluded and the
// alpha weights cover only the retained band.
// ---------------------------------------------------------------------------

struct BoundarySample {
  Vec2 x;            // boundary point
  Vec2 xi;           // inward unit (coordinate) direction
  double mu = 0.0;   // -<xi, nu>_g = cos(alpha)
  double tau = 0.0;  // exit time (g-length of the chord)
  double w = 0.0;    // quadrature weight for d(boundary measure)
};

struct BoundaryGrid {
  int nbeta = 0, nalpha = 0;
  double margin = 0.0;        // excluded tangential band, |mu| < margin
  double alpha_max = 0.0;     // retained band is [-alpha_max, alpha_max]
  std::vector<double> beta;   // size nbeta (periodic)
  std::vector<double> alpha;  // size nalpha
  std::vector<BoundarySample> s;  // beta-major, size nbeta*nalpha
  double step = 0.0;          // geodesic integration step used throughout

  int size() const { return nbeta * nalpha; }
  int id(int ib, int ia) const { return ib * nalpha + ia; }
};

BoundaryGrid build_boundary_grid(const geo::SimpleManifold2D& man, int nbeta,
                                 int nalpha, double step,
                                 double margin = 0.05);

struct RayTransformData {
  double lambda = 0.0;
  Eigen::VectorXcd values;  // one per boundary sample
};

RayTransformData ray_transform(const geo::SimpleManifold2D& man,
                               const BoundaryGrid& bg, const GridFn& f,
                               double lambda);

// single-ray transform (used by the closed-form oracles)
complex ray_integral(const geo::SimpleManifold2D& man, Vec2 x0, Vec2 dir,
                     const std::function<complex(Vec2)>& f, double lambda,
                     double step);

// independent adjoint: per interior node a uniform fan of ndir directions,
// each traced backward to its entry sample on the inward boundary grid
// (bilinear interpolation in (beta, alpha)); T*h(x) =
// int_{S^1} e^{-lam tau(x,-xi)} h_psi(x, xi) dxi
GridFn adjoint_ray_transform(const geo::SimpleManifold2D& man,
                             const BoundaryGrid& bg,
                             const Eigen::VectorXcd& h, double lambda,
                             const GridSpec& gs, int ndir);

// Santalo: fan-side quadrature int_{d+} int_0^tau F(phi_t(x,xi)) mu dt dS
// vs the direct int_{SM0} F; agreement of the two is the test
double santalo_fan(const geo::SimpleManifold2D& man, const BoundaryGrid& bg,
                   const std::function<double(Vec2, Vec2)>& F);
double santalo_direct(const geo::SimpleManifold2D& man,
                      const std::function<double(Vec2, Vec2)>& F, int n,
                      int ndir);

// two-point kernel of the normal operator,
//   K_lam(x,y) = (e^{-lam phi+} + e^{-lam phi-}) / |J(d)|
//   phi_pm = 2 tau(x, -/+ tangent toward y) +/- d(x,y),
// with J the Jacobi field along the connecting geodesic (shooting with
// secant refinement) carrying the exponential-map Jacobian and volume
// factors; Euclidean specialization K_0 = 2/|x-y|.  Rejects x == y.
double kernel_K_lambda(const geo::SimpleManifold2D& man, Vec2 x, Vec2 y,
                       double lambda, double step = 1e-3);

// discrete transform as a sparse matrix over grid unknowns (rows =
// boundary samples), quadrature and e^{-lam t} weights folded in
Eigen::SparseMatrix<double> discrete_transform(
    const geo::SimpleManifold2D& man, const BoundaryGrid& bg,
    const GridSpec& gs, double lambda);

struct NormalOperatorMatrix {
  Eigen::MatrixXd a;      // Gram composition T^t diag(w mu) T (PSD)
  double sym_defect = 0;  // ||a - a^t|| / ||a||
};

NormalOperatorMatrix normal_operator(const geo::SimpleManifold2D& man,
                                     const BoundaryGrid& bg,
                                     const GridSpec& gs, double lambda);

struct InvertReport {
  int iterations = 0;
  double rel_residual = 0.0;
  bool converged = false;
};

// CG on (T* T + ridge) f = T* data in L^2(M0, dV_g); matrix-free through
// the sparse transform
GridFn invert_normal(const geo::SimpleManifold2D& man, const BoundaryGrid& bg,
                     const RayTransformData& data, const GridSpec& gs,
                     double ridge, InvertReport* report = nullptr);

}  // namespace cgolab::xray
