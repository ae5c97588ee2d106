#include "cgolab/carleman.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

namespace cgolab::car {

// ------------------------------- multiplier -------------------------------

double m_tau(double tau, double mu, double t) {
  require(mu >= 0.0, "m_tau: mu must be nonnegative");
  require(tau != 0.0, "m_tau: tau must be nonzero");
  if (tau < 0.0) return m_tau(-tau, mu, -t);
  require(std::abs(tau - mu) > 0.0, "m_tau: resonance tau == mu");
  if (mu == 0.0) {
    return t < 0.0 ? t * std::exp(tau * t) : 0.0;
  }
  if (tau > mu) {
    // both poles below the real axis: supported on t < 0
    if (t >= 0.0) return 0.0;
    return (std::exp((tau + mu) * t) - std::exp((tau - mu) * t)) / (2.0 * mu);
  }
  // tau < mu: one pole on each side
  if (t < 0.0) return std::exp((tau + mu) * t) / (2.0 * mu);
  return std::exp((tau - mu) * t) / (2.0 * mu);
}

// ----------------------------- quadrature bits -----------------------------

namespace {

// 12-point Gauss-Legendre nodes/weights on [-1, 1]
constexpr double kGLx[6] = {0.1252334085114689, 0.3678314989981802,
                            0.5873179542866175, 0.7699026741943047,
                            0.9041172563704749, 0.9815606342467192};
constexpr double kGLw[6] = {0.2491470458134028, 0.2334925365383548,
                            0.2031674267230659, 0.1600783285433462,
                            0.1069393259953184, 0.0471753363865118};

template <typename F>
double gl12(F&& f, double a, double b) {
  const double c = 0.5 * (a + b), r = 0.5 * (b - a);
  double s = 0.0;
  for (int i = 0; i < 6; ++i)
    s += kGLw[i] * (f(c - r * kGLx[i]) + f(c + r * kGLx[i]));
  return r * s;
}

// composite GL12 with panels short enough for the exponential rate
template <typename F>
double gl12_rate(F&& f, double a, double b, double rate) {
  const int n = std::max(1, static_cast<int>(std::ceil(rate * (b - a))));
  double s = 0.0;
  for (int p = 0; p < n; ++p)
    s += gl12(f, a + (b - a) * p / n, a + (b - a) * (p + 1) / n);
  return s;
}

}  // namespace

double cubic_cardinal(double u, double h) {
  const double s = std::abs(u) / h;
  if (s >= 2.0) return 0.0;
  if (s <= 1.0) return 0.5 * (s * s - 1.0) * (s - 2.0);
  return -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0;
}

std::vector<double> kernel_weights(double tau, double mu, double h, int dmin,
                                   int dmax) {
  require(h > 0 && dmin <= dmax, "kernel_weights: bad range");
  const double rate = std::abs(tau) + mu;  // fastest exponent present
  std::vector<double> W(dmax - dmin + 1, 0.0);
  for (int d = dmin; d <= dmax; ++d) {
    auto integrand = [&](double u) {
      return m_tau(tau, mu, d * h - u) * cubic_cardinal(u, h);
    };
    // panel edges at the cardinal kinks u in {-2h,-h,0,h,2h}; the kernel
    // kink at u = d h lands on one of these whenever it is inside
    double w = 0.0;
    for (int p = -2; p < 2; ++p)
      w += gl12_rate(integrand, p * h, (p + 1) * h, rate);
    W[d - dmin] = w;
  }
  return W;
}

// ------------------------------- cylinder ---------------------------------

Eigen::VectorXd ProductCylinder::x1_weights() const {
  Eigen::VectorXd w = Eigen::VectorXd::Constant(Nx, h1());
  w[0] *= 0.5;
  w[Nx - 1] *= 0.5;
  return w;
}

bool CarlemanParams::admissible(const geo::EigenBasis& B) const {
  const double t2 = tau * tau;
  for (const auto& m : B.modes)
    if (std::abs(t2 - m.lambda) < guard()) return false;
  return true;
}

Eigen::VectorXd make_chi(const ProductCylinder& cyl, double margin) {
  require(margin > 0 && 2 * margin < cyl.xb - cyl.xa, "bad chi margin");
  Eigen::VectorXd chi(cyl.Nx);
  for (int i = 0; i < cyl.Nx; ++i) {
    const double x = cyl.x1(i);
    chi[i] = smoothstep5((x - cyl.xa) / margin) *
             smoothstep5((cyl.xb - x) / margin);
  }
  return chi;
}

// ----------------------------- derivatives --------------------------------

namespace {

// 4th-order first derivative down the rows of C
Field d1(const ProductCylinder& cyl, const Field& C) {
  const int N = cyl.Nx;
  const double h = cyl.h1();
  Field out(N, C.cols());
  require(N >= 6, "grid too small for the 4th-order stencil");
  for (int i = 2; i < N - 2; ++i)
    out.row(i) = (C.row(i - 2) - 8.0 * C.row(i - 1) + 8.0 * C.row(i + 1) -
                  C.row(i + 2)) /
                 (12.0 * h);
  out.row(0) = (-25.0 * C.row(0) + 48.0 * C.row(1) - 36.0 * C.row(2) +
                16.0 * C.row(3) - 3.0 * C.row(4)) /
               (12.0 * h);
  out.row(1) = (-3.0 * C.row(0) - 10.0 * C.row(1) + 18.0 * C.row(2) -
                6.0 * C.row(3) + C.row(4)) /
               (12.0 * h);
  out.row(N - 1) = (25.0 * C.row(N - 1) - 48.0 * C.row(N - 2) +
                    36.0 * C.row(N - 3) - 16.0 * C.row(N - 4) +
                    3.0 * C.row(N - 5)) /
                   (12.0 * h);
  out.row(N - 2) = (3.0 * C.row(N - 1) + 10.0 * C.row(N - 2) -
                    18.0 * C.row(N - 3) + 6.0 * C.row(N - 4) -
                    C.row(N - 5)) /
                   (12.0 * h);
  return out;
}

// 4th-order second derivative (2nd order at the edge rows; inputs are
// expected to be interior-supported anyway)
Field d2(const ProductCylinder& cyl, const Field& C) {
  const int N = cyl.Nx;
  const double h2 = cyl.h1() * cyl.h1();
  Field out(N, C.cols());
  for (int i = 2; i < N - 2; ++i)
    out.row(i) = (-C.row(i - 2) + 16.0 * C.row(i - 1) - 30.0 * C.row(i) +
                  16.0 * C.row(i + 1) - C.row(i + 2)) /
                 (12.0 * h2);
  out.row(0) =
      (2.0 * C.row(0) - 5.0 * C.row(1) + 4.0 * C.row(2) - C.row(3)) / h2;
  out.row(1) = (C.row(0) - 2.0 * C.row(1) + C.row(2)) / h2;
  out.row(N - 1) = (2.0 * C.row(N - 1) - 5.0 * C.row(N - 2) +
                    4.0 * C.row(N - 3) - C.row(N - 4)) /
                   h2;
  out.row(N - 2) = (C.row(N - 1) - 2.0 * C.row(N - 2) + C.row(N - 3)) / h2;
  return out;
}

}  // namespace

Field deriv_x1(const ProductCylinder& cyl, const Field& u) {
  return d1(cyl, u);
}

Field analyze_slices(const ProductCylinder& cyl,
                     const Eigen::MatrixXcd& values) {
  require(values.rows() == cyl.Nx &&
              values.cols() == cyl.basis.npoints(),
          "analyze_slices: shape mismatch");
  require(cyl.basis.E.size() > 0, "analyze_slices: basis has no node matrix");
  return cyl.basis.cell_weight * (values * cyl.basis.E.conjugate());
}

Field analyze_on(const geo::EigenBasis& B, const Eigen::MatrixXcd& values) {
  require(values.cols() == B.npoints(), "analyze_on: shape mismatch");
  require(B.E.size() > 0, "analyze_on: basis has no node matrix");
  return B.cell_weight * (values * B.E.conjugate());
}

Eigen::MatrixXcd synthesize_slices(const ProductCylinder& cyl,
                                   const Field& u) {
  require(u.rows() == cyl.Nx && u.cols() == cyl.basis.J(),
          "synthesize_slices: shape mismatch");
  require(cyl.basis.E.size() > 0,
          "synthesize_slices: basis has no node matrix");
  return u * cyl.basis.E.transpose();
}

double pointwise_lp(const ProductCylinder& cyl,
                    const Eigen::MatrixXcd& values, double p) {
  require(p >= 1.0, "pointwise_lp: p must be >= 1");
  if (std::isinf(p)) return values.cwiseAbs().maxCoeff();
  const Eigen::VectorXd w = cyl.x1_weights();
  const double cw = cyl.basis.cell_weight;
  double acc = 0.0;
  for (int i = 0; i < values.rows(); ++i) {
    double row = 0.0;
    for (int q = 0; q < values.cols(); ++q)
      row += std::pow(std::abs(values(i, q)), p);
    acc += w[i] * cw * row;
  }
  return std::pow(acc, 1.0 / p);
}

Field conjugated_laplacian(const ProductCylinder& cyl, double tau,
                           const Field& u) {
  require(u.rows() == cyl.Nx && u.cols() == cyl.basis.J(),
          "conjugated_laplacian: field/grid mismatch");
  Field out = d2(cyl, u) - 2.0 * tau * d1(cyl, u);
  const double t2 = tau * tau;
  for (int j = 0; j < u.cols(); ++j)
    out.col(j) += (t2 - cyl.basis.lambda[j]) * u.col(j);
  return out;
}

// -------------------------------- G_tau -----------------------------------

Field apply_G_tau(const ProductCylinder& cyl, const Field& f,
                  const CarlemanParams& params) {
  require(f.rows() == cyl.Nx && f.cols() == cyl.basis.J(),
          "apply_G_tau: field/grid mismatch");
  require(params.admissible(cyl.basis),
          "apply_G_tau: tau fails the admissibility guard");
  const double tau = params.tau, h = cyl.h1();
  const int N = cyl.Nx;

  Field out = Field::Zero(N, f.cols());
  // weights depend on j only through lambda, so cache per distinct value
  std::map<double, std::vector<double>> cache;

  for (int j = 0; j < f.cols(); ++j) {
    const double lam = cyl.basis.lambda[j];
    const double mu = std::sqrt(lam);
    // two-sided decay rate of |m| is at least |tau - mu| (tau for mu = 0);
    // keep terms down to e^{-45}
    const double rate = mu > 0.0 ? std::abs(std::abs(tau) - mu) : std::abs(tau);
    int D = N - 1;
    if (rate * h > 0.0)
      D = std::min<int>(N - 1, static_cast<int>(std::ceil(45.0 / (rate * h))) + 2);
    const int dmin = -D, dmax = D;

    auto it = cache.find(lam);
    if (it == cache.end())
      it = cache.emplace(lam, kernel_weights(tau, mu, h, dmin, dmax)).first;
    const std::vector<double>& W = it->second;

    for (int i = 0; i < N; ++i) {
      complex acc = 0.0;
      const int dlo = std::max(dmin, i - (N - 1));
      const int dhi = std::min(dmax, i);
      for (int d = dlo; d <= dhi; ++d) acc += W[d - dmin] * f(i - d, j);
      out(i, j) = acc;
    }
  }
  if (params.chi.size() > 0) {
    require(params.chi.size() == N, "apply_G_tau: chi/grid mismatch");
    out = params.chi.asDiagonal() * out;
  }
  return out;
}

// -------------------------------- norms -----------------------------------

double l2_norm(const ProductCylinder& cyl, const Field& u) {
  const Eigen::VectorXd w = cyl.x1_weights();
  return std::sqrt(u.cwiseAbs2().rowwise().sum().dot(w));
}

double h1_norm(const ProductCylinder& cyl, const Field& u) {
  const Eigen::VectorXd w = cyl.x1_weights();
  const double a = u.cwiseAbs2().rowwise().sum().dot(w);
  const Field du = d1(cyl, u);
  const double b = du.cwiseAbs2().rowwise().sum().dot(w);
  const double c = (u.cwiseAbs2() * cyl.basis.lambda).dot(w);
  return std::sqrt(a + b + c);
}

namespace {

std::vector<int> active_columns(const Field& u) {
  std::vector<int> idx;
  for (int j = 0; j < u.cols(); ++j)
    if (u.col(j).cwiseAbs().maxCoeff() > 0.0) idx.push_back(j);
  return idx;
}

}  // namespace

double lp_norm(const ProductCylinder& cyl, const Field& u, double p) {
  require(p >= 1.0, "lp_norm: p must be >= 1");
  const auto idx = active_columns(u);
  if (idx.empty()) return 0.0;
  Eigen::MatrixXcd Esub = cyl.basis.eval_modes_at(cyl.basis.nodes, idx);
  Field Csub(u.rows(), idx.size());
  for (std::size_t c = 0; c < idx.size(); ++c) Csub.col(c) = u.col(idx[c]);
  Eigen::MatrixXcd V = Csub * Esub.transpose();  // Nx x Npts point values

  if (std::isinf(p)) return V.cwiseAbs().maxCoeff();
  const Eigen::VectorXd w = cyl.x1_weights();
  const double cw = cyl.basis.cell_weight;
  double acc = 0.0;
  for (int i = 0; i < V.rows(); ++i) {
    double row = 0.0;
    for (int q = 0; q < V.cols(); ++q) row += std::pow(std::abs(V(i, q)), p);
    acc += w[i] * cw * row;
  }
  return std::pow(acc, 1.0 / p);
}

double lp_norm_transverse(const geo::EigenBasis& B, const Eigen::VectorXcd& c,
                          double p) {
  require(p >= 1.0, "lp_norm_transverse: p must be >= 1");
  std::vector<int> idx;
  for (int j = 0; j < c.size(); ++j)
    if (c[j] != complex(0.0)) idx.push_back(j);
  if (idx.empty()) return 0.0;
  Eigen::MatrixXcd Esub = B.eval_modes_at(B.nodes, idx);
  Eigen::VectorXcd csub(idx.size());
  for (std::size_t q = 0; q < idx.size(); ++q) csub[q] = c[idx[q]];
  Eigen::VectorXcd v = Esub * csub;
  if (std::isinf(p)) return v.cwiseAbs().maxCoeff();
  double acc = 0.0;
  for (int q = 0; q < v.size(); ++q)
    acc += B.cell_weight * std::pow(std::abs(v[q]), p);
  return std::pow(acc, 1.0 / p);
}

// ---------------------------- spectral clusters ----------------------------

std::vector<SpectralCluster> spectral_clusters(const geo::EigenBasis& B) {
  int kceil = 0;
  for (const auto& m : B.modes)
    kceil = std::max(kceil, static_cast<int>(std::floor(std::sqrt(m.lambda))));
  std::vector<SpectralCluster> out(kceil + 1);
  for (int k = 0; k <= kceil; ++k) out[k].k = k;
  for (int j = 0; j < B.J(); ++j) {
    const int k = static_cast<int>(std::floor(std::sqrt(B.modes[j].lambda)));
    out[k].indices.push_back(j);
  }
  return out;
}

std::vector<ClusterRow> verify_cluster_estimates(const geo::EigenBasis& B,
                                                 int trials,
                                                 std::uint64_t seed) {
  require(trials >= 1, "verify_cluster_estimates: trials >= 1");
  const auto clusters = spectral_clusters(B);
  std::vector<ClusterRow> rows(clusters.size());
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    rows[c].k = clusters[c].k;
    rows[c].size = static_cast<int>(clusters[c].indices.size());
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int t = 0; t < trials; ++t) {
    Eigen::VectorXcd c(B.J());
    for (int j = 0; j < B.J(); ++j) c[j] = complex(gauss(rng), gauss(rng));
    for (std::size_t q = 0; q < clusters.size(); ++q) {
      if (clusters[q].indices.empty()) continue;
      // the extremal inputs for cluster k live inside the cluster, so the
      // sampled u is the restriction of the random draw (chi_k u = u)
      Eigen::VectorXcd ck = Eigen::VectorXcd::Zero(B.J());
      for (int j : clusters[q].indices) ck[j] = c[j];
      const double scale = std::pow(1.0 + clusters[q].k, 1.0 / 6.0);
      rows[q].sogge_ratio = std::max(
          rows[q].sogge_ratio, lp_norm_transverse(B, ck, 6.0) /
                                   (scale * lp_norm_transverse(B, ck, 2.0)));
      rows[q].dual_ratio = std::max(
          rows[q].dual_ratio, lp_norm_transverse(B, ck, 2.0) /
                                  (scale * lp_norm_transverse(B, ck, 1.2)));
    }
  }
  return rows;
}

// ------------------------------ sweep inputs -------------------------------

namespace {

// infinitely smooth bump, exactly 0 outside |s| < 1
double smooth_bump(double s) {
  if (std::abs(s) >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - s * s));
}

}  // namespace

Field make_test_field(const ProductCylinder& cyl, int nmodes,
                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const double L = cyl.xb - cyl.xa;
  const double w = 0.22 * L;
  const double xc = cyl.xa + L * (0.4 + 0.2 * unif(rng));

  // random distinct low modes (lambda <= 400 keeps sampled Lp norms honest)
  std::vector<int> pool;
  for (int j = 0; j < cyl.basis.J(); ++j)
    if (cyl.basis.lambda[j] <= 400.0) pool.push_back(j);
  require(!pool.empty(), "make_test_field: empty mode pool");
  std::shuffle(pool.begin(), pool.end(), rng);
  const int m = std::min<int>(nmodes, static_cast<int>(pool.size()));

  Field C = Field::Zero(cyl.Nx, cyl.basis.J());
  for (int q = 0; q < m; ++q) {
    const complex amp(gauss(rng), gauss(rng));
    const double freq = 6.0 * (unif(rng) - 0.5);
    for (int i = 0; i < cyl.Nx; ++i) {
      const double x = cyl.x1(i);
      C(i, pool[q]) = amp * smooth_bump((x - xc) / w) *
                      std::exp(complex(0.0, freq * x));
    }
  }
  return C;
}

namespace {

// bump(x1) e^{i eta x1} placed on a single transverse mode
Field mode_probe(const ProductCylinder& cyl, int j, double eta) {
  Field C = Field::Zero(cyl.Nx, cyl.basis.J());
  const double L = cyl.xb - cyl.xa;
  const double xc = 0.5 * (cyl.xa + cyl.xb), w = 0.4 * L;
  for (int i = 0; i < cyl.Nx; ++i) {
    const double x = cyl.x1(i);
    C(i, j) = smooth_bump((x - xc) / w) * std::exp(complex(0.0, eta * x));
  }
  return C;
}

}  // namespace

std::vector<SweepRow> verify_carleman_sweep(const ProductCylinder& cyl,
                                            const std::vector<double>& taus,
                                            int trials, std::uint64_t seed) {
  require(trials >= 1, "verify_carleman_sweep: trials >= 1");
  std::vector<SweepRow> rows;
  for (double tau : taus) {
    SweepRow row;
    row.tau = tau;
    CarlemanParams params;
    params.tau = tau;
    params.chi = make_chi(cyl, 0.08 * (cyl.xb - cyl.xa));
    if (!params.admissible(cyl.basis)) {
      row.admissible = false;
      rows.push_back(row);
      continue;
    }

    // input set: random interior-supported fields plus a probe on the
    // transverse mode closest to tau^2 at its least-damped x1 frequency
    std::vector<Field> inputs;
    for (int t = 0; t < trials; ++t)
      inputs.push_back(make_test_field(cyl, 24, seed + 1000 * t + 17));
    int jstar = 0;
    for (int j = 0; j < cyl.basis.J(); ++j)
      if (std::abs(cyl.basis.lambda[j] - tau * tau) <
          std::abs(cyl.basis.lambda[jstar] - tau * tau))
        jstar = j;
    const double gap = tau * tau - cyl.basis.lambda[jstar];
    const double eta = gap > 0.0 ? std::sqrt(gap) : 0.0;
    inputs.push_back(mode_probe(cyl, jstar, eta));

    for (const Field& f : inputs) {
      const Field g = apply_G_tau(cyl, f, params);
      const double fl2 = l2_norm(cyl, f);
      const double f65 = lp_norm(cyl, f, 1.2);
      row.l2_ratio = std::max(row.l2_ratio,
                              std::abs(tau) * l2_norm(cyl, g) / fl2);
      row.h1_ratio = std::max(row.h1_ratio, h1_norm(cyl, g) / fl2);
      row.lp_ratio = std::max(row.lp_ratio, lp_norm(cyl, g, 6.0) / f65);
    }
    // a-priori inequality for the conjugated operator on interior-supported u
    for (int t = 0; t < trials; ++t) {
      const Field u = make_test_field(cyl, 24, seed + 1000 * t + 501);
      const Field f = conjugated_laplacian(cyl, tau, u);
      row.inv_ratio = std::max(row.inv_ratio, l2_norm(cyl, u) / l2_norm(cyl, f));
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace cgolab::car
