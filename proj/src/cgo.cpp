#include "cgolab/cgo.hpp"

#include <algorithm>
#include <cmath>

namespace cgolab::cgo {

// -------------------------------- region ----------------------------------

namespace {

double wrap(double d, double L) {
  d = std::fmod(d, L);
  if (d < -0.5 * L) d += L;
  if (d >= 0.5 * L) d -= L;
  return d;
}

}  // namespace

Vec2 Region::rel(const geo::EigenBasis& B, Vec2 y) const {
  return {wrap(y.x - disk.center.x, B.L1), wrap(y.y - disk.center.y, B.L2)};
}

double Region::cutoff(const geo::EigenBasis& B, double x1, Vec2 y) const {
  const double xwin = smoothstep_inf((x1 - (ma - roll_x1)) / roll_x1) *
                      smoothstep_inf(((mb + roll_x1) - x1) / roll_x1);
  if (xwin == 0.0) return 0.0;
  const double r = rel(B, y).norm();
  return xwin * smoothstep_inf((disk.radius + roll_r - r) / roll_r);
}

bool Region::inside(const geo::EigenBasis& B, double x1, Vec2 y) const {
  return x1 >= ma && x1 <= mb && rel(B, y).norm() <= disk.radius;
}

bool Region::well_inside(const geo::EigenBasis& B, double x1, Vec2 y,
                         double margin) const {
  return x1 >= ma + margin && x1 <= mb - margin &&
         rel(B, y).norm() <= disk.radius - margin;
}

// -------------------------------- ansatz ----------------------------------

complex CgoAnsatz::b_val(double theta) const {
  const int k = K();
  complex s = 0.0;
  for (int m = -k; m <= k; ++m)
    s += b[m + k] * std::exp(complex(0.0, m * theta));
  return s;
}

complex CgoAnsatz::b_p(double theta) const {
  const int k = K();
  complex s = 0.0;
  for (int m = -k; m <= k; ++m)
    s += complex(0.0, static_cast<double>(m)) * b[m + k] *
         std::exp(complex(0.0, m * theta));
  return s;
}

complex CgoAnsatz::b_pp(double theta) const {
  const int k = K();
  complex s = 0.0;
  for (int m = -k; m <= k; ++m)
    s -= static_cast<double>(m) * m * b[m + k] *
         std::exp(complex(0.0, m * theta));
  return s;
}

namespace {

// common evaluation loop: factor(r, theta) chooses amplitude vs source;
// B may be a finer quadrature basis than the working one
template <typename F>
PointField eval_fan(const car::ProductCylinder& cyl,
                    const geo::EigenBasis& B, const Region& M,
                    const CgoAnsatz& ansatz, double tau, double lambda,
                    F&& factor) {
  PointField out = PointField::Zero(cyl.Nx, B.npoints());
  for (int p = 0; p < B.npoints(); ++p) {
    const Vec2 y = B.nodes[p];
    // nearest-image offset from the fan center
    const Vec2 d{wrap(y.x - ansatz.omega.x, B.L1),
                 wrap(y.y - ansatz.omega.y, B.L2)};
    const double r = d.norm();
    const double th = std::atan2(d.y, d.x);
    bool used = false;
    for (int i = 0; i < cyl.Nx; ++i) {
      const double c = M.cutoff(B, cyl.x1(i), y);
      if (c == 0.0) continue;
      used = true;
      const complex phase =
          std::exp(complex(-lambda * r, lambda * cyl.x1(i) - tau * r));
      out(i, p) = c * phase * factor(r, th);
    }
    // the fan center must stay well clear of the supported points
    if (used) require(r > 1e-6, "fan center lies inside the support");
  }
  return out;
}

}  // namespace

namespace {

PointField amplitude_on(const car::ProductCylinder& cyl,
                        const geo::EigenBasis& B, const Region& M,
                        const CgoAnsatz& ansatz, double tau) {
  return eval_fan(cyl, B, M, ansatz, tau, ansatz.lambda,
                  [&](double r, double th) {
                    return ansatz.b_val(th) / std::sqrt(r);
                  });
}

}  // namespace

PointField cgo_amplitude(const car::ProductCylinder& cyl, const Region& M,
                         const CgoAnsatz& ansatz, double tau) {
  return amplitude_on(cyl, cyl.basis, M, ansatz, tau);
}

namespace {

// jets of the two cutoff factors in cylinder coordinates
StepJet xwin_jet(const Region& M, double x1) {
  const double w = M.roll_x1;
  const StepJet l = smoothstep_inf_jet((x1 - (M.ma - w)) / w);
  const StepJet r = smoothstep_inf_jet(((M.mb + w) - x1) / w);
  StepJet j;
  j.v = l.v * r.v;
  j.d1 = (l.d1 * r.v - l.v * r.d1) / w;
  j.d2 = (l.d2 * r.v - 2.0 * l.d1 * r.d1 + l.v * r.d2) / (w * w);
  return j;
}

StepJet rho_jet(const Region& M, double s) {
  const double w = M.roll_r;
  const StepJet u = smoothstep_inf_jet(((M.disk.radius + w) - s) / w);
  return {u.v, -u.d1 / w, u.d2 / (w * w)};
}

}  // namespace

namespace {

// exact conjugated Laplacian of the cut amplitude chi a:
//   P(chi a) = chi P(a) + a Dchi + 2 grad(chi).grad(a) - 2 tau a d1(chi)
// with chi = X(x1) Rho(|y - center|) and P(a) the fan closed form; the two
// pieces (chi P(a), and the commutator terms supported on the roll shell)
// can be requested separately
PointField source_on(const car::ProductCylinder& cyl,
                     const geo::EigenBasis& B, const Region& M,
                     const CgoAnsatz& ansatz, double tau, bool with_free,
                     bool with_comm) {
  const double lambda = ansatz.lambda;
  PointField out = PointField::Zero(cyl.Nx, B.npoints());
  for (int p = 0; p < B.npoints(); ++p) {
    const Vec2 y = B.nodes[p];
    const Vec2 d{wrap(y.x - ansatz.omega.x, B.L1),
                 wrap(y.y - ansatz.omega.y, B.L2)};
    const double r = d.norm();
    const double th = std::atan2(d.y, d.x);
    const Vec2 ds = M.rel(B, y);
    const double s = ds.norm();
    const StepJet Rho = rho_jet(M, s);
    if (Rho.v == 0.0 && Rho.d1 == 0.0 && Rho.d2 == 0.0) continue;
    require(r > 1e-6, "fan center lies inside the support");

    const complex bv = ansatz.b_val(th);
    const complex bp = ansatz.b_p(th);
    const complex bpp = ansatz.b_pp(th);
    // radial factor G(r) = e^{-(lambda + i tau) r} / sqrt(r) and its
    // logarithmic derivative; the e^{i lambda x1} factor is split off
    const complex mu(lambda, tau);
    const complex G = std::exp(-mu * r) / std::sqrt(r);
    const complex Glog = -mu - 0.5 / r;
    // unit vectors: fan-radial/angular and disk-radial
    const Vec2 rhat = d * (1.0 / r);
    const Vec2 that{-rhat.y, rhat.x};
    const Vec2 shat = s > 1e-12 ? ds * (1.0 / s) : Vec2{1.0, 0.0};

    const complex a_val = G * bv;                            // a / e^{i l x1}
    const complex f_free = G * (0.25 * bv + bpp) / (r * r);  // P(a) likewise
    const complex da_s =
        G * (Glog * bv * shat.dot(rhat) + bp * shat.dot(that) / r);

    for (int i = 0; i < cyl.Nx; ++i) {
      const StepJet X = xwin_jet(M, cyl.x1(i));
      if (X.v == 0.0 && X.d1 == 0.0 && X.d2 == 0.0) continue;
      complex val = 0.0;
      if (with_free) val += X.v * Rho.v * f_free;
      if (with_comm) {
        const double lap_chi =
            X.d2 * Rho.v + X.v * (Rho.d2 + (s > 1e-12 ? Rho.d1 / s : 0.0));
        val += a_val * (lap_chi - 2.0 * tau * X.d1 * Rho.v) +
               2.0 * (complex(0.0, lambda) * X.d1 * Rho.v * a_val +
                      X.v * Rho.d1 * da_s);
      }
      out(i, p) = std::exp(complex(0.0, lambda * cyl.x1(i))) * val;
    }
  }
  return out;
}

}  // namespace

PointField cgo_source(const car::ProductCylinder& cyl, const Region& M,
                      const CgoAnsatz& ansatz, double tau) {
  return source_on(cyl, cyl.basis, M, ansatz, tau, true, true);
}

// ------------------------------- potential --------------------------------

PointField Potential::abs_sqrt() const {
  return q.cwiseAbs().cwiseSqrt().cast<complex>();
}

PointField Potential::phase_half() const {
  PointField out(q.rows(), q.cols());
  for (int i = 0; i < q.rows(); ++i)
    for (int p = 0; p < q.cols(); ++p) {
      const double mag = std::abs(q(i, p));
      out(i, p) = mag > 0.0 ? q(i, p) / std::sqrt(mag) : complex(0.0);
    }
  return out;
}

double Potential::l32(const car::ProductCylinder& cyl) const {
  return car::pointwise_lp(cyl, q, 1.5);
}

std::pair<Potential, Potential> split_potential(
    const car::ProductCylinder& cyl, const Potential& q, double eps) {
  require(eps > 0.0, "split_potential: eps must be positive");
  std::vector<double> vals;
  vals.reserve(q.q.size());
  for (int i = 0; i < q.q.rows(); ++i)
    for (int p = 0; p < q.q.cols(); ++p) {
      const double a = std::abs(q.q(i, p));
      if (a > 0.0) vals.push_back(a);
    }
  std::sort(vals.begin(), vals.end());
  vals.erase(std::unique(vals.begin(), vals.end()), vals.end());

  auto tail_norm = [&](double mu) {
    PointField t = PointField::Zero(q.q.rows(), q.q.cols());
    for (int i = 0; i < q.q.rows(); ++i)
      for (int p = 0; p < q.q.cols(); ++p)
        if (std::abs(q.q(i, p)) > mu) t(i, p) = q.q(i, p);
    return car::pointwise_lp(cyl, t, 1.5);
  };

  // nothing to trim when the whole potential fits the budget
  double mu = vals.empty() ? 0.0 : vals.back();
  if (!vals.empty() && car::pointwise_lp(cyl, q.q, 1.5) > eps) {
    require(tail_norm(vals.back()) <= eps, "split_potential: internal");
    std::size_t lo = 0, hi = vals.size() - 1;
    if (tail_norm(vals[0]) <= eps) {
      mu = vals[0];
    } else {
      while (hi - lo > 1) {
        const std::size_t mid = (lo + hi) / 2;
        (tail_norm(vals[mid]) <= eps ? hi : lo) = mid;
      }
      mu = vals[hi];
    }
  }

  Potential sharp, flat;
  sharp.q = PointField::Zero(q.q.rows(), q.q.cols());
  flat.q = PointField::Zero(q.q.rows(), q.q.cols());
  for (int i = 0; i < q.q.rows(); ++i)
    for (int p = 0; p < q.q.cols(); ++p)
      (std::abs(q.q(i, p)) <= mu ? sharp.q(i, p) : flat.q(i, p)) = q.q(i, p);
  return {sharp, flat};
}

// ------------------------------ free solution -----------------------------

namespace {

car::CarlemanParams params_for(const car::ProductCylinder& cyl,
                               const Region& M, double tau) {
  car::CarlemanParams params;
  params.tau = tau;
  const double gap = std::min(M.ma - cyl.xa, cyl.xb - M.mb);
  require(gap > M.roll_x1, "region too close to the cylinder ends");
  params.chi = car::make_chi(cyl, 0.95 * gap);
  return params;
}

}  // namespace

CgoSolution build_free_cgo(const car::ProductCylinder& cyl, const Region& M,
                           const CgoAnsatz& ansatz, double tau,
                           const geo::EigenBasis* fine) {
  const geo::EigenBasis& AB = fine ? *fine : cyl.basis;
  require(AB.J() == cyl.basis.J(),
          "build_free_cgo: analysis basis must carry the same mode set");

  CgoSolution sol;
  sol.tau = tau;
  sol.lambda = ansatz.lambda;
  sol.a = cgo_amplitude(cyl, M, ansatz, tau);
  sol.A = car::analyze_on(AB, fine ? amplitude_on(cyl, AB, M, ansatz, tau)
                                   : sol.a);

  const PointField f_free = source_on(cyl, AB, M, ansatz, tau, true, false);
  const PointField f_comm = source_on(cyl, AB, M, ansatz, tau, false, true);
  const car::Field F = car::analyze_on(AB, f_free);
  const car::Field Fc = car::analyze_on(AB, f_comm);
  {
    const Eigen::VectorXd w = cyl.x1_weights();
    double acc = 0.0;
    for (int i = 0; i < cyl.Nx; ++i)
      acc += w[i] * AB.cell_weight * f_free.row(i).squaredNorm();
    sol.f_l2 = std::sqrt(acc);
  }

  const auto params = params_for(cyl, M, tau);
  sol.r0 = car::apply_G_tau(cyl, F, params);
  sol.ext = car::apply_G_tau(cyl, Fc, params);
  sol.r1 = car::Field::Zero(cyl.Nx, cyl.basis.J());
  sol.r0_l2 = car::l2_norm(cyl, sol.r0);
  sol.r0_h1 = car::h1_norm(cyl, sol.r0);
  sol.r0_l6 = car::lp_norm(cyl, sol.r0, 6.0);
  sol.rt_l2 = sol.r0_l2;
  sol.rt_l6 = sol.r0_l6;
  return sol;
}

// ------------------------------ Neumann series -----------------------------

NeumannResult neumann_solve(const car::ProductCylinder& cyl,
                            const Potential& q, double tau,
                            const PointField& rhs) {
  const PointField sq = q.abs_sqrt();
  const PointField m = q.phase_half();
  car::CarlemanParams params;
  params.tau = tau;

  NeumannResult res;
  res.v = rhs;
  res.terms = 1;
  const double rhs_norm = car::pointwise_lp(cyl, rhs, 2.0);
  if (rhs_norm == 0.0) {
    res.r1 = car::Field::Zero(cyl.Nx, cyl.basis.J());
    return res;
  }

  PointField term = rhs;
  double prev = rhs_norm;
  for (int k = 1; k <= 60; ++k) {
    const car::Field g =
        car::apply_G_tau(cyl, car::analyze_slices(cyl, sq.cwiseProduct(term)),
                         params);
    term = -m.cwiseProduct(car::synthesize_slices(cyl, g));
    const double tn = car::pointwise_lp(cyl, term, 2.0);
    if (tn == 0.0) break;
    const double ratio = tn / prev;
    res.contraction = std::max(res.contraction, ratio);
    require(ratio <= 0.9,
            "neumann_solve: contraction factor " + std::to_string(ratio) +
                " exceeds 0.9 (tau too small for this potential)");
    res.v += term;
    ++res.terms;
    prev = tn;
    if (tn <= 1e-10 * rhs_norm) break;
  }
  res.r1 = car::apply_G_tau(
      cyl, car::analyze_slices(cyl, sq.cwiseProduct(res.v)), params);
  return res;
}

// --------------------------- corrected solution ----------------------------

CgoSolution build_cgo(const car::ProductCylinder& cyl, const Region& M,
                      const Potential& q, const CgoAnsatz& ansatz, double tau,
                      const geo::EigenBasis* fine) {
  CgoSolution sol = build_free_cgo(cyl, M, ansatz, tau, fine);
  if (q.q.size() == 0 || q.q.cwiseAbs().maxCoeff() == 0.0) return sol;

  const PointField r0pt = car::synthesize_slices(cyl, sol.ext + sol.r0);
  const PointField rhs = -q.phase_half().cwiseProduct(sol.a + r0pt);
  const NeumannResult nr = neumann_solve(cyl, q, tau, rhs);

  sol.r1 = nr.r1;
  sol.contraction = nr.contraction;
  sol.terms = nr.terms;
  const car::Field rt = sol.r0 + sol.r1;
  sol.rt_l2 = car::l2_norm(cyl, rt);
  sol.rt_l6 = car::lp_norm(cyl, rt, 6.0);
  return sol;
}

double cgo_residual(const car::ProductCylinder& cyl, const Region& M,
                    const Potential& q, const CgoSolution& sol,
                    double margin) {
  // residual of the discrete problem: everything is compared through the
  // truncated transverse basis, so the non-representable tails of a and
  // q W (identical on both sides of the equation) drop out
  const car::Field rt = sol.ext + sol.r0 + sol.r1;
  const PointField W = sol.a + car::synthesize_slices(cyl, rt);
  car::Field U = sol.A + rt;
  car::Field Rs = -conjugated_laplacian(cyl, sol.tau, U);
  if (q.q.size() > 0) Rs += car::analyze_slices(cyl, q.q.cwiseProduct(W));
  const PointField R = car::synthesize_slices(cyl, Rs);

  // restrict to the interior of M
  const Eigen::VectorXd w = cyl.x1_weights();
  const double cw = cyl.basis.cell_weight;
  double acc = 0.0;
  for (int i = 0; i < cyl.Nx; ++i)
    for (int p = 0; p < cyl.basis.npoints(); ++p)
      if (M.well_inside(cyl.basis, cyl.x1(i), cyl.basis.nodes[p], margin))
        acc += w[i] * cw * std::norm(R(i, p));
  return std::sqrt(acc);
}

}  // namespace cgolab::cgo
