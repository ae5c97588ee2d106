#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <functional>
#include <memory>
#include <vector>

#include "cgolab/common.hpp"

namespace cgolab::fwd {

// ---------------------------------------------------------------------------
// Dirichlet problem for -Delta + q on a tensor box in cylinder coordinates
// (x1, y1, y2).  A cross-section direction may be periodic (full torus
// cross-section); the x1 direction never is.  Second-order finite
// differences; the discrete bilinear form
//   B(u, v) = sum_links (u_i - u_j)(v_i - v_j)^- / h_d^2 * V
//           + sum_nodes q_i u_i v_i^- V
// is the energy of the 7-point scheme, so the weak and strong discrete
// problems coincide and boundary flux pairings never touch one-sided
// differences.
// ---------------------------------------------------------------------------

struct Box {
  std::array<double, 3> lo{}, hi{};
  std::array<int, 3> n{};          // grid points per direction
  std::array<bool, 3> periodic{};  // direction wraps (no boundary faces)

  int npoints() const { return n[0] * n[1] * n[2]; }
  double h(int d) const {
    return (hi[d] - lo[d]) / (periodic[d] ? n[d] : n[d] - 1);
  }
  double coord(int d, int i) const { return lo[d] + h(d) * i; }
  int id(int i, int j, int k) const { return (i * n[1] + j) * n[2] + k; }
  bool on_boundary(int i, int j, int k) const {
    auto edge = [&](int d, int v) {
      return !periodic[d] && (v == 0 || v == n[d] - 1);
    };
    return edge(0, i) || edge(1, j) || edge(2, k);
  }
  double cell_volume() const { return h(0) * h(1) * h(2); }
};

using SpMat = Eigen::SparseMatrix<complex>;
using Lu = Eigen::SparseLU<SpMat>;

struct DirichletSystem {
  Box box;
  Eigen::VectorXcd q;        // potential samples at all nodes
  std::vector<int> unknown;  // node id -> interior index, or -1 on boundary
  std::vector<int> bnodes;   // boundary node ids, trace ordering
  SpMat Aii, Aib, Abi, Abb;  // blocks of the form matrix (volume-weighted)
  double scale = 0.0;        // typical diagonal magnitude of Aii
  double sigma_min = 0.0;    // smallest-singular-value estimate of Aii
  bool guard_ok = false;     // sigma_min >= guard * scale
  std::shared_ptr<Lu> lu;    // factorization of Aii

  int nb() const { return static_cast<int>(bnodes.size()); }
  int ni() const { return Aii.rows(); }
};

// assemble the system and factor the interior block; the eigenvalue guard
// flags (but does not throw on) a near-singular interior system
DirichletSystem assemble(const Box& box, const Eigen::VectorXcd& q_nodes,
                         double guard = 1e-6);
DirichletSystem assemble(
    const Box& box, const std::function<complex(double, double, double)>& q,
    double guard = 1e-6);

// u on all nodes with u|_boundary = f (indexed by bnodes); throws when the
// eigenvalue guard failed at assembly
Eigen::VectorXcd solve_dirichlet(const DirichletSystem& sys,
                                 const Eigen::VectorXcd& f);

// batched interior solve for many traces (one column per trace)
Eigen::MatrixXcd solve_dirichlet_many(const DirichletSystem& sys,
                                      const Eigen::MatrixXcd& F);

// scaled interior residual of the strong 7-point form, max_i |(Au)_i| / scale
double strong_residual(const DirichletSystem& sys, const Eigen::VectorXcd& u);

// the discrete bilinear form over the whole grid; sesquilinear (conjugates
// the second slot) or bilinear (no conjugation, used by the integral
// identity)
complex form_sesq(const DirichletSystem& sys, const Eigen::VectorXcd& u,
                  const Eigen::VectorXcd& v);
complex form_bilin(const DirichletSystem& sys, const Eigen::VectorXcd& u,
                   const Eigen::VectorXcd& v);

// weak DN pairing <Lambda_q f, h> = B(u_f, v_h) with v_h any extension of
// the trace h; zero extension by default (the form annihilates interior
// test directions at the solution, so the choice does not matter)
complex dn_pairing(const DirichletSystem& sys, const Eigen::VectorXcd& u_f,
                   const Eigen::VectorXcd& h);

struct DNMapMatrix {
  Eigen::MatrixXcd m;        // <Lambda f_j, delta_k> in nodal trace basis
  std::vector<int> bnodes;   // trace ordering (grid node ids)
};

// full DN matrix in the nodal boundary basis: Abb - Abi Aii^{-1} Aib,
// computed weakly (columns are batched through one factorization)
DNMapMatrix dn_map(const DirichletSystem& sys);

// Lemma-style integral identity: both sides of
//   int_M (q1 - q2) u1 u2 dV = int_dM ((L1 - L2) u1|_d) u2 dS
// computed independently (volume quadrature vs weak boundary pairings);
// u1 solves for q1, u2 for q2.  Warns via the returned residuals when
// either field fails its strong form.
struct IdentitySides {
  complex volume{};
  complex boundary{};
  double res1 = 0.0, res2 = 0.0;  // strong residuals of u1, u2
};
IdentitySides integral_identity(const DirichletSystem& s1,
                                const DirichletSystem& s2,
                                const Eigen::VectorXcd& u1,
                                const Eigen::VectorXcd& u2);

// smallest eigenvalue of the Hermitian part of (Aii + C * mass): the
// discrete coercivity-after-shift proxy
double coercivity_eig(const DirichletSystem& sys, double C);

}  // namespace cgolab::fwd
