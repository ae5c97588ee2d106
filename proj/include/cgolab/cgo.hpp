#pragma once

#include <Eigen/Dense>

#include "cgolab/carleman.hpp"
#include "cgolab/geometry.hpp"

namespace cgolab::cgo {

// ---------------------------------------------------------------------------
// The working domain M = [ma, mb] x D sits strictly inside the cylinder,
// with D a disk in torus coordinates.  Sources supported on M are extended
// to the cylinder through a smooth roll-off (exactly 1 on M, exactly 0 a
// little further out), which keeps the transverse spectral representation
// free of jump artifacts while leaving the equation on M untouched.
// ---------------------------------------------------------------------------

struct DiskSpec {
  Vec2 center{};
  double radius = 0.0;
};

struct Region {
  double ma = 0.0, mb = 0.0;
  DiskSpec disk;
  double roll_x1 = 0.0;  // x1 roll-off width beyond [ma, mb]
  double roll_r = 0.0;   // radial roll-off width beyond the disk

  // nearest-image offset of y from the disk center
  Vec2 rel(const geo::EigenBasis& B, Vec2 y) const;
  // 1 on M, smooth, 0 outside the inflated region
  double cutoff(const geo::EigenBasis& B, double x1, Vec2 y) const;
  bool inside(const geo::EigenBasis& B, double x1, Vec2 y) const;
  // interior indicator with a margin (used for residual masks)
  bool well_inside(const geo::EigenBasis& B, double x1, Vec2 y,
                   double margin) const;
};

// ---------------------------------------------------------------------------
// Complex geometrical optics ansatz in a flat fan about omega:
//   a = e^{-i tau r} r^{-1/2} e^{i lambda (x1 + i r)} b(theta),
// with (r, theta) polar coordinates about omega and b a finite Fourier
// series on the circle.  The conjugated Laplacian of the ansatz collapses
// to the closed form
//   e^{tau x1} Delta_g e^{-tau x1} a
//     = e^{-i tau r} (b/4 + b'')(theta) r^{-5/2} e^{i lambda (x1 + i r)} :
// the eikonal and transport terms cancel exactly for the r^{-1/2} weight.
// ---------------------------------------------------------------------------

struct CgoAnsatz {
  Vec2 omega{};
  double lambda = 0.0;
  Eigen::VectorXcd b;  // coefficients of e^{i m theta}, m = -K .. K

  int K() const { return (static_cast<int>(b.size()) - 1) / 2; }
  complex b_val(double theta) const;
  complex b_p(double theta) const;   // d b / d theta
  complex b_pp(double theta) const;  // d^2 b / d theta^2
};

// pointwise fields on the cylinder tensor grid (Nx rows, torus nodes cols)
using PointField = Eigen::MatrixXcd;

// amplitude chi*a and its exact conjugated source f = e^{tau x1} Delta
// e^{-tau x1}(chi a) sampled on the grid.  The source carries the cutoff
// commutator terms (supported on the roll shell), so the pair satisfies
// the conjugated equation everywhere, not just where chi = 1; without
// them the shell mismatch leaks into M through the transverse mode
// truncation and dominates the residual.
PointField cgo_amplitude(const car::ProductCylinder& cyl, const Region& M,
                         const CgoAnsatz& ansatz, double tau);
PointField cgo_source(const car::ProductCylinder& cyl, const Region& M,
                      const CgoAnsatz& ansatz, double tau);

// ---------------------------------------------------------------------------
// Potentials: complex q sampled pointwise on the cylinder, zero outside M.
// ---------------------------------------------------------------------------

struct Potential {
  PointField q;

  PointField abs_sqrt() const;  // |q|^{1/2}
  PointField phase_half() const;  // m = |q|^{1/2} e^{i alpha}, q = |q|^{1/2} m
  // L^{3/2} norm (the critical exponent n/2 for n = 3)
  double l32(const car::ProductCylinder& cyl) const;
};

// q = qs + qb with qs = q 1_{|q| <= mu}, qb the tail; mu is the smallest
// sampled |q| value with ||qb||_{L^{3/2}} <= eps (deterministic bisection
// over the sorted sample values); when the whole potential already fits
// the budget there is nothing to trim and qb = 0
std::pair<Potential, Potential> split_potential(
    const car::ProductCylinder& cyl, const Potential& q, double eps);

// ---------------------------------------------------------------------------
// Solutions u = e^{-tau x1} (chi a + ext + r~), r~ = r0 + r1.
//
// The remainder is split into the part the theory speaks about and the
// part our extension-to-the-torus apparatus creates:
//   r0  = G_tau(chi f_free)  with f_free the fan closed form -- its norms
//         obey the tau-uniform remainder bounds;
//   ext = G_tau(f_comm)      with f_comm = P(chi a) - chi P(a) the cutoff
//         commutator (supported on the roll shell, O(tau) in size) -- it
//         repairs the equation and is lumped with the amplitude carrier,
//         not with the remainder diagnostics.
// Both a and the sources may be analyzed on a finer quadrature basis than
// the working grid (`fine`): the commutator is sharp and its aliasing on
// the working grid would otherwise dominate the discrete residual.
// ---------------------------------------------------------------------------

struct CgoSolution {
  double tau = 0.0, lambda = 0.0;
  PointField a;         // cutoff-masked amplitude samples on the work grid
  car::Field A;         // analyzed amplitude coefficients
  car::Field ext;       // extension corrector e = G_tau(f_comm)
  car::Field r0, r1;    // spectral remainders; r~ = r0 + r1
  double f_l2 = 0.0;    // recorded ||chi f_free||_L2
  double r0_l2 = 0.0, r0_h1 = 0.0, r0_l6 = 0.0;
  double rt_l2 = 0.0, rt_l6 = 0.0;
  double contraction = 0.0;  // empirical Neumann factor (0 if no potential)
  int terms = 0;             // Neumann terms summed
};

// free solution (q = 0): r0 = G_tau f, Prop-3.2-style diagnostics recorded;
// `fine` (same mode set, finer quadrature grid) dealiases the analysis of
// the amplitude and sources when provided
CgoSolution build_free_cgo(const car::ProductCylinder& cyl, const Region& M,
                           const CgoAnsatz& ansatz, double tau,
                           const geo::EigenBasis* fine = nullptr);

struct NeumannResult {
  PointField v;
  car::Field r1;        // G_tau(|q|^{1/2} v)
  double contraction = 0.0;
  int terms = 0;
};

// v = sum_k (-m G_tau |q|^{1/2})^k rhs, truncated at a 1e-10 relative
// increment; fails with a diagnostic when the empirical contraction factor
// exceeds 0.9 (tau too small for this potential)
NeumannResult neumann_solve(const car::ProductCylinder& cyl,
                            const Potential& q, double tau,
                            const PointField& rhs);

// potential-corrected solution via the symmetrized series
CgoSolution build_cgo(const car::ProductCylinder& cyl, const Region& M,
                      const Potential& q, const CgoAnsatz& ansatz, double tau,
                      const geo::EigenBasis* fine = nullptr);

// discrete conjugated-PDE residual || e^{tau x1}(-Delta_g + q)e^{-tau x1}
// (a + ext + r~) ||_{L2} over the interior of M (margin shrinks the mask),
// evaluated through the truncated transverse basis on both sides
double cgo_residual(const car::ProductCylinder& cyl, const Region& M,
                    const Potential& q, const CgoSolution& sol,
                    double margin);

}  // namespace cgolab::cgo
