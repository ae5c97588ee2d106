#include "cgolab/forward.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace cgolab::fwd {

namespace {

// neighbor node id with periodic wrap; -1 when the step leaves a
// non-periodic direction
int neighbor(const Box& b, int i, int j, int k, int d, int s) {
  int v[3] = {i, j, k};
  v[d] += s;
  if (b.periodic[d]) {
    if (v[d] < 0) v[d] += b.n[d];
    if (v[d] >= b.n[d]) v[d] -= b.n[d];
  } else if (v[d] < 0 || v[d] >= b.n[d]) {
    return -1;
  }
  return b.id(v[0], v[1], v[2]);
}

// apply the full volume-weighted operator A = V (-Delta_h + q) to samples
// on all nodes (used by the strong residual and the bilinear forms)
Eigen::VectorXcd apply_full(const DirichletSystem& sys,
                            const Eigen::VectorXcd& u) {
  const Box& b = sys.box;
  const double V = b.cell_volume();
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(b.npoints());
  for (int i = 0; i < b.n[0]; ++i)
    for (int j = 0; j < b.n[1]; ++j)
      for (int k = 0; k < b.n[2]; ++k) {
        const int p = b.id(i, j, k);
        complex acc = sys.q[p] * u[p] * V;
        for (int d = 0; d < 3; ++d) {
          const double w = V / (b.h(d) * b.h(d));
          for (int s : {-1, 1}) {
            const int nb = neighbor(b, i, j, k, d, s);
            if (nb >= 0) acc += w * (u[p] - u[nb]);
            // missing neighbor: homogeneous contribution only (the form
            // has no links outside the grid)
          }
        }
        out[p] = acc;
      }
  return out;
}

}  // namespace

DirichletSystem assemble(const Box& box, const Eigen::VectorXcd& q_nodes,
                         double guard) {
  if (box.periodic[0]) fail("forward: x1 direction cannot be periodic");
  if (q_nodes.size() != box.npoints())
    fail("forward: potential sample count does not match the grid");

  DirichletSystem sys;
  sys.box = box;
  sys.q = q_nodes;
  sys.unknown.assign(box.npoints(), -1);

  int ni = 0;
  std::vector<int> iof;  // boundary index per node id, -1 when interior
  iof.assign(box.npoints(), -1);
  for (int i = 0; i < box.n[0]; ++i)
    for (int j = 0; j < box.n[1]; ++j)
      for (int k = 0; k < box.n[2]; ++k) {
        const int p = box.id(i, j, k);
        if (box.on_boundary(i, j, k)) {
          iof[p] = static_cast<int>(sys.bnodes.size());
          sys.bnodes.push_back(p);
        } else {
          sys.unknown[p] = ni++;
        }
      }

  const double V = box.cell_volume();
  std::vector<Eigen::Triplet<complex>> tii, tib, tbi, tbb;
  auto add = [&](int p, int r, complex val) {
    const int up = sys.unknown[p], ur = sys.unknown[r];
    if (up >= 0 && ur >= 0)
      tii.emplace_back(up, ur, val);
    else if (up >= 0)
      tib.emplace_back(up, iof[r], val);
    else if (ur >= 0)
      tbi.emplace_back(iof[p], ur, val);
    else
      tbb.emplace_back(iof[p], iof[r], val);
  };
  for (int i = 0; i < box.n[0]; ++i)
    for (int j = 0; j < box.n[1]; ++j)
      for (int k = 0; k < box.n[2]; ++k) {
        const int p = box.id(i, j, k);
        add(p, p, sys.q[p] * V);
        for (int d = 0; d < 3; ++d) {
          const double w = V / (box.h(d) * box.h(d));
          for (int s : {-1, 1}) {
            const int nb = neighbor(box, i, j, k, d, s);
            if (nb < 0) continue;
            add(p, p, w);
            add(p, nb, -w);
          }
        }
      }

  const int nbn = static_cast<int>(sys.bnodes.size());
  sys.Aii.resize(ni, ni);
  sys.Aib.resize(ni, nbn);
  sys.Abi.resize(nbn, ni);
  sys.Abb.resize(nbn, nbn);
  sys.Aii.setFromTriplets(tii.begin(), tii.end());
  sys.Aib.setFromTriplets(tib.begin(), tib.end());
  sys.Abi.setFromTriplets(tbi.begin(), tbi.end());
  sys.Abb.setFromTriplets(tbb.begin(), tbb.end());

  sys.scale = sys.Aii.diagonal().cwiseAbs().mean();
  sys.lu = std::make_shared<Lu>();
  sys.lu->compute(sys.Aii);
  if (sys.lu->info() != Eigen::Success) {
    sys.sigma_min = 0.0;
    sys.guard_ok = false;
    return sys;
  }

  // smallest-singular-value estimate by inverse power iteration on A^H A
  Eigen::VectorXcd v = Eigen::VectorXcd::Ones(ni).normalized();
  double sig = 0.0;
  for (int it = 0; it < 8; ++it) {
    Eigen::VectorXcd w = sys.lu->adjoint().solve(v);
    Eigen::VectorXcd z = sys.lu->solve(w);
    const double nz = z.norm();
    if (!(nz > 0.0)) break;
    sig = 1.0 / std::sqrt(nz);  // z ~ (A^H A)^{-1} v for normalized v
    v = z / nz;
  }
  sys.sigma_min = sig;
  sys.guard_ok = sig >= guard * sys.scale;
  return sys;
}

DirichletSystem assemble(
    const Box& box, const std::function<complex(double, double, double)>& q,
    double guard) {
  Eigen::VectorXcd qn(box.npoints());
  for (int i = 0; i < box.n[0]; ++i)
    for (int j = 0; j < box.n[1]; ++j)
      for (int k = 0; k < box.n[2]; ++k)
        qn[box.id(i, j, k)] =
            q(box.coord(0, i), box.coord(1, j), box.coord(2, k));
  return assemble(box, qn, guard);
}

Eigen::VectorXcd solve_dirichlet(const DirichletSystem& sys,
                                 const Eigen::VectorXcd& f) {
  if (!sys.guard_ok)
    fail("forward: interior system is near-singular (eigenvalue guard)");
  if (f.size() != sys.nb()) fail("forward: trace size mismatch");
  Eigen::VectorXcd ui = sys.lu->solve(Eigen::VectorXcd(-(sys.Aib * f)));
  Eigen::VectorXcd u(sys.box.npoints());
  for (int p = 0; p < sys.box.npoints(); ++p)
    u[p] = (sys.unknown[p] >= 0) ? ui[sys.unknown[p]] : complex{};
  for (int b = 0; b < sys.nb(); ++b) u[sys.bnodes[b]] = f[b];
  return u;
}

Eigen::MatrixXcd solve_dirichlet_many(const DirichletSystem& sys,
                                      const Eigen::MatrixXcd& F) {
  if (!sys.guard_ok)
    fail("forward: interior system is near-singular (eigenvalue guard)");
  Eigen::MatrixXcd Ui = sys.lu->solve(Eigen::MatrixXcd(-(sys.Aib * F)));
  Eigen::MatrixXcd U(sys.box.npoints(), F.cols());
  for (int p = 0; p < sys.box.npoints(); ++p)
    if (sys.unknown[p] >= 0) U.row(p) = Ui.row(sys.unknown[p]);
  for (int b = 0; b < sys.nb(); ++b) U.row(sys.bnodes[b]) = F.row(b);
  return U;
}

double strong_residual(const DirichletSystem& sys,
                       const Eigen::VectorXcd& u) {
  const Eigen::VectorXcd Au = apply_full(sys, u);
  double m = 0.0;
  for (int p = 0; p < sys.box.npoints(); ++p)
    if (sys.unknown[p] >= 0) m = std::max(m, std::abs(Au[p]));
  return m / sys.scale;
}

namespace {

template <bool Conj>
complex form_impl(const DirichletSystem& sys, const Eigen::VectorXcd& u,
                  const Eigen::VectorXcd& v) {
  const Box& b = sys.box;
  const double V = b.cell_volume();
  auto bar = [](complex z) { return Conj ? std::conj(z) : z; };
  complex acc{};
  for (int i = 0; i < b.n[0]; ++i)
    for (int j = 0; j < b.n[1]; ++j)
      for (int k = 0; k < b.n[2]; ++k) {
        const int p = b.id(i, j, k);
        acc += sys.q[p] * u[p] * bar(v[p]) * V;
        for (int d = 0; d < 3; ++d) {
          const double w = V / (b.h(d) * b.h(d));
          const int nb = neighbor(b, i, j, k, d, 1);
          if (nb < 0) continue;  // each link counted once, forward steps
          acc += w * (u[p] - u[nb]) * bar(v[p] - v[nb]);
        }
      }
  return acc;
}

}  // namespace

complex form_sesq(const DirichletSystem& sys, const Eigen::VectorXcd& u,
                  const Eigen::VectorXcd& v) {
  return form_impl<true>(sys, u, v);
}

complex form_bilin(const DirichletSystem& sys, const Eigen::VectorXcd& u,
                   const Eigen::VectorXcd& v) {
  return form_impl<false>(sys, u, v);
}

complex dn_pairing(const DirichletSystem& sys, const Eigen::VectorXcd& u_f,
                   const Eigen::VectorXcd& h) {
  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(sys.box.npoints());
  for (int b = 0; b < sys.nb(); ++b) v[sys.bnodes[b]] = h[b];
  return form_sesq(sys, u_f, v);
}

DNMapMatrix dn_map(const DirichletSystem& sys) {
  if (!sys.guard_ok)
    fail("forward: interior system is near-singular (eigenvalue guard)");
  DNMapMatrix dn;
  dn.bnodes = sys.bnodes;
  const Eigen::MatrixXcd Ui =
      sys.lu->solve(Eigen::MatrixXcd(sys.Aib));  // Aii^{-1} Aib, batched
  dn.m = Eigen::MatrixXcd(sys.Abb) - sys.Abi * Ui;
  return dn;
}

IdentitySides integral_identity(const DirichletSystem& s1,
                                const DirichletSystem& s2,
                                const Eigen::VectorXcd& u1,
                                const Eigen::VectorXcd& u2) {
  IdentitySides out;
  out.res1 = strong_residual(s1, u1);
  out.res2 = strong_residual(s2, u2);
  const double V = s1.box.cell_volume();
  for (int p = 0; p < s1.box.npoints(); ++p)
    out.volume += (s1.q[p] - s2.q[p]) * u1[p] * u2[p] * V;
  // <(L1 - L2) u1|_d, u2|_d> through the weak forms: the gradient parts
  // cancel between the two pairings, leaving the volume side
  out.boundary = form_bilin(s1, u1, u2) - form_bilin(s2, u2, u1);
  return out;
}

double coercivity_eig(const DirichletSystem& sys, double C) {
  const Eigen::MatrixXcd A = Eigen::MatrixXcd(sys.Aii);
  Eigen::MatrixXcd H = 0.5 * (A + A.adjoint());
  H.diagonal().array() += C * sys.box.cell_volume();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H,
                                                     Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace cgolab::fwd
