#include "cgolab/pipeline.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <stdexcept>
#include <thread>

#include "cgolab/carleman.hpp"
#include "cgolab/geometry.hpp"
#include "cgolab/gridio.hpp"

namespace cgolab::pipe {

namespace {

// fan coordinates about omega with the branch cut opposite the disk center:
// theta is measured from the omega->center direction, so the box subtends
// a wedge well inside (-pi, pi) and half-integer harmonics are single valued
struct Fan {
  double w1, w2, dirc;
  Fan(const std::array<double, 2>& omega, const std::array<double, 2>& center)
      : w1(omega[0]), w2(omega[1]),
        dirc(std::atan2(center[1] - omega[1], center[0] - omega[0])) {}
  double r(double y1, double y2) const { return std::hypot(y1 - w1, y2 - w2); }
  double theta(double y1, double y2) const {
    double th = std::atan2(y2 - w2, y1 - w1) - dirc;
    while (th > M_PI) th -= 2 * M_PI;
    while (th < -M_PI) th += 2 * M_PI;
    return th;
  }
};

Eigen::VectorXcd nodal(const fwd::Box& box,
                       const std::function<complex(double, double, double)>& f) {
  Eigen::VectorXcd v(box.npoints());
  for (int i = 0; i < box.n[0]; ++i)
    for (int j = 0; j < box.n[1]; ++j)
      for (int k = 0; k < box.n[2]; ++k)
        v[box.id(i, j, k)] = f(box.coord(0, i), box.coord(1, j), box.coord(2, k));
  return v;
}

Eigen::VectorXcd trace_of(const fwd::DirichletSystem& sys,
                          const Eigen::VectorXcd& a) {
  Eigen::VectorXcd f(sys.nb());
  for (int b = 0; b < sys.nb(); ++b) f[b] = a[sys.bnodes[b]];
  return f;
}

// u2 amplitude in the cross-section (tau-independent probe kinds)
complex cross_amplitude(const ExperimentConfig& ec, const Probe& p, double y1,
                        double y2) {
  complex z((y1 - ec.center[0]) / ec.disk_radius,
            (y2 - ec.center[1]) / ec.disk_radius);
  switch (p.kind) {
    case Probe::Kind::poly:
      return std::pow(p.n >= 0 ? z : std::conj(z), std::abs(p.n));
    case Probe::Kind::expo:
      return std::exp(complex(0, 1) * p.kappa *
                      std::exp(complex(0, p.phi)) * z);
    default:
      return 1.0;
  }
}

// y-plane kernel of the model integral: the x1 dependence e^{i lambda x1}
// is absorbed into f_lambda, and the tau exponentials cancel in the product
complex moment_kernel(const ExperimentConfig& ec, const Probe& p, double lambda,
                      double y1, double y2) {
  Fan fan(ec.omegas()[p.iomega], ec.center);
  double r = fan.r(y1, y2), th = fan.theta(y1, y2);
  complex u1 = std::exp(-lambda * r) / std::sqrt(r) *
               std::exp(complex(0, p.mu1 * th));
  if (p.kind == Probe::Kind::fan)
    return u1 / std::sqrt(r) * std::exp(complex(0, p.mu2 * th));
  return u1 * cross_amplitude(ec, p, y1, y2);
}

// Zernike basis (disk polynomials) on the recovery grid, one column per
// (n, l) with n <= nmax and n - |l| even; evaluated at interior pixels
struct DiskBasis {
  xray::GridSpec gs;
  std::vector<int> pix;     // grid ids inside the disk
  Eigen::MatrixXcd q;       // orthonormalized columns (thin QR)
  Eigen::MatrixXcd raw;     // raw Zernike columns
};

DiskBasis build_disk_basis(const xray::GridSpec& gs, int nmax) {
  DiskBasis b;
  b.gs = gs;
  for (int i = 0; i < gs.n; ++i)
    for (int j = 0; j < gs.n; ++j)
      if (gs.point(i, j).norm() <= gs.R) b.pix.push_back(gs.id(i, j));
  const int npx = static_cast<int>(b.pix.size());
  std::vector<Eigen::VectorXcd> cols;
  for (int n = 0; n <= nmax; ++n)
    for (int l = -n; l <= n; ++l) {
      if ((n - std::abs(l)) % 2) continue;
      int m = std::abs(l);
      Eigen::VectorXcd col(npx);
      for (int ip = 0; ip < npx; ++ip) {
        Vec2 p = gs.point(b.pix[ip] / gs.n, b.pix[ip] % gs.n);
        double rr = p.norm() / gs.R, th = std::atan2(p.y, p.x);
        double rad = 0.0;
        for (int s = 0; s <= (n - m) / 2; ++s) {
          double c = (s % 2 ? -1.0 : 1.0) * std::tgamma(n - s + 1.0) /
                     (std::tgamma(s + 1.0) * std::tgamma((n + m) / 2 - s + 1.0) *
                      std::tgamma((n - m) / 2 - s + 1.0));
          rad += c * std::pow(rr, n - 2 * s);
        }
        col[ip] = rad * std::exp(complex(0, l * th));
      }
      cols.push_back(col);
    }
  b.raw.resize(npx, static_cast<int>(cols.size()));
  for (int c = 0; c < b.raw.cols(); ++c) b.raw.col(c) = cols[c];
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(b.raw);
  b.q = qr.householderQ() * Eigen::MatrixXcd::Identity(npx, b.raw.cols());
  return b;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = 1469598103934665603ull ^ seed;
  for (std::uint64_t v : {a, b})
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ull;
    }
  return h;
}

}  // namespace

std::vector<std::array<double, 2>> ExperimentConfig::omegas() const {
  std::vector<std::array<double, 2>> out;
  const double hw = half_width, d = hw + omega_offset;
  for (int s = 0; s < omegas_per_side; ++s) {
    double t = -hw + (s + 0.5) * 2 * hw / omegas_per_side;
    out.push_back({center[0] + d, center[1] + t});
    out.push_back({center[0] - d, center[1] + t});
    out.push_back({center[0] + t, center[1] + d});
    out.push_back({center[0] + t, center[1] - d});
  }
  return out;
}

ExperimentConfig ExperimentConfig::load(const io::Config& cfg) {
  ExperimentConfig ec;
  ec.x_lo = cfg.num("geometry.x_lo", ec.x_lo);
  ec.x_hi = cfg.num("geometry.x_hi", ec.x_hi);
  if (cfg.has("geometry.center")) {
    auto c = cfg.num_list("geometry.center");
    if (c.size() != 2) throw std::runtime_error("geometry.center needs 2 values");
    ec.center = {c[0], c[1]};
  }
  ec.half_width = cfg.num("geometry.half_width", ec.half_width);
  ec.disk_radius = cfg.num("geometry.disk_radius", ec.disk_radius);
  if (cfg.has("geometry.box_n")) {
    auto n = cfg.num_list("geometry.box_n");
    if (n.size() != 3) throw std::runtime_error("geometry.box_n needs 3 values");
    ec.box_n = {(int)n[0], (int)n[1], (int)n[2]};
  }
  ec.amp = cfg.num("potential.amp", ec.amp);
  ec.y_sigma = cfg.num("potential.y_sigma", ec.y_sigma);
  ec.y_support = cfg.num("potential.y_support", ec.y_support);
  ec.imag_amp = cfg.num("potential.imag_amp", ec.imag_amp);
  ec.omegas_per_side = (int)cfg.integer("probes.omegas_per_side", ec.omegas_per_side);
  ec.omega_offset = cfg.num("probes.omega_offset", ec.omega_offset);
  if (cfg.has("probes.tau_schedule")) ec.tau_schedule = cfg.num_list("probes.tau_schedule");
  ec.extract_tol = cfg.num("probes.extract_tol", ec.extract_tol);
  ec.poly_order = (int)cfg.integer("probes.poly_order", ec.poly_order);
  if (cfg.has("probes.kappa_grid")) ec.kappa_grid = cfg.num_list("probes.kappa_grid");
  ec.expo_dirs = (int)cfg.integer("probes.expo_dirs", ec.expo_dirs);
  ec.lambda_max = cfg.num("band.lambda_max", ec.lambda_max);
  ec.dlambda = cfg.num("band.dlambda", ec.dlambda);
  ec.lambda_threshold = cfg.num("band.lambda_threshold", ec.lambda_threshold);
  ec.zernike_order = (int)cfg.integer("recovery.zernike_order", ec.zernike_order);
  ec.ridge_rel = cfg.num("recovery.ridge_rel", ec.ridge_rel);
  ec.cond_limit = cfg.num("recovery.cond_limit", ec.cond_limit);
  ec.recon_grid_n = (int)cfg.integer("recovery.recon_grid_n", ec.recon_grid_n);
  ec.xray_diagnostic = cfg.flag("recovery.xray_diagnostic", ec.xray_diagnostic);
  ec.dn_noise = cfg.num("run.dn_noise", ec.dn_noise);
  ec.seed = (std::uint64_t)cfg.integer("run.seed", (long)ec.seed);
  ec.threads = (int)cfg.integer("run.threads", ec.threads);
  ec.out_dir = cfg.str("run.out_dir", ec.out_dir);
  return ec;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw std::runtime_error("config validation: " + msg);
  };
  if (x_hi <= x_lo || half_width <= 0) fail("degenerate box");
  if (box_n[0] < 5 || box_n[1] < 5 || box_n[2] < 5) fail("box_n too small");
  if (y_support > half_width) fail("potential support exceeds the box");
  if (y_support > disk_radius) fail("potential support exceeds the disk");
  if (half_width + omega_offset <= disk_radius)
    fail("probe vertices must lie outside the cross-section disk");
  if (omega_offset <= 0) fail("probe vertices must stand off the box");
  if (lambda_max > lambda_threshold)
    fail("lambda band exceeds the smallness threshold of the ray inversion");
  if (dlambda <= 0 || 2 * M_PI / dlambda < 2 * (x_hi - x_lo))
    fail("lambda spacing violates the Nyquist bound for the slab support");
  if (imag_amp != 0.0)
    fail("complex potentials need the mirrored lambda band (not configured)");
  if (tau_schedule.empty()) fail("empty tau schedule");
  // formal Carleman admissibility of the fan-probe schedule: tau^2 must
  // stay clear of the companion torus spectrum (same guard as G_tau)
  double kmax = *std::max_element(tau_schedule.begin(), tau_schedule.end()) + 2.0;
  auto basis = geo::build_flat_torus_basis(2 * M_PI / std::sqrt(2.0),
                                           2 * M_PI / std::sqrt(3.0), 16, 16,
                                           std::max(kmax, 4.0), false);
  for (double t : tau_schedule) {
    if (t <= 0) fail("tau schedule entries must be positive");
    car::CarlemanParams prm;
    prm.tau = t;
    if (!prm.admissible(basis))
      fail("tau " + std::to_string(t) + " fails the admissibility guard");
  }
  if (extract_tol <= 0 || ridge_rel <= 0 || cond_limit <= 1) fail("bad tolerances");
  if (zernike_order < 0 || recon_grid_n < 9) fail("bad recovery resolution");
  if (poly_order < 1 && kappa_grid.empty())
    fail("no enrichment probes configured");
}

ForwardStage build_forward(const ExperimentConfig& ec) {
  ForwardStage fs;
  fs.box.lo = {ec.x_lo, ec.center[0] - ec.half_width, ec.center[1] - ec.half_width};
  fs.box.hi = {ec.x_hi, ec.center[0] + ec.half_width, ec.center[1] + ec.half_width};
  fs.box.n = ec.box_n;
  fs.box.periodic = {false, false, false};
  const double Lx = ec.x_hi - ec.x_lo, x0 = 0.5 * (ec.x_lo + ec.x_hi);
  fs.q_nodes = nodal(fs.box, [&](double x1, double y1, double y2) -> complex {
    double d1 = y1 - ec.center[0], d2 = y2 - ec.center[1];
    double r2 = d1 * d1 + d2 * d2, t = r2 / (ec.y_support * ec.y_support);
    if (t >= 1.0) return 0.0;
    double wy = std::exp(-r2 / (ec.y_sigma * ec.y_sigma)) * std::exp(-t / (1 - t));
    double wx = std::cos(M_PI * (x1 - x0) / Lx);
    return complex(ec.amp, ec.imag_amp) * wx * wx * wy;
  });
  fs.sys_q = fwd::assemble(fs.box, fs.q_nodes);
  fs.sys_0 = fwd::assemble(fs.box, Eigen::VectorXcd::Zero(fs.box.npoints()).eval());
  if (!fs.sys_q.guard_ok || !fs.sys_0.guard_ok)
    throw std::runtime_error("forward stage: interior eigenvalue guard failed");
  return fs;
}

Eigen::VectorXcd probe_field_u1(const ExperimentConfig& ec, const fwd::Box& box,
                                const Probe& p, double tau, double lambda) {
  Fan fan(ec.omegas()[p.iomega], ec.center);
  complex s(-tau, lambda);
  double mu = p.mu1;
  return nodal(box, [&](double x1, double y1, double y2) -> complex {
    double r = fan.r(y1, y2), th = fan.theta(y1, y2);
    return std::exp(s * complex(x1, r)) / std::sqrt(r) *
           std::exp(complex(0, mu * th));
  });
}

Eigen::VectorXcd probe_field_u2(const ExperimentConfig& ec, const fwd::Box& box,
                                const Probe& p, double tau, double lambda) {
  (void)lambda;
  if (p.kind == Probe::Kind::fan) {
    Fan fan(ec.omegas()[p.iomega], ec.center);
    double mu = p.mu2;
    return nodal(box, [&](double x1, double y1, double y2) -> complex {
      double r = fan.r(y1, y2), th = fan.theta(y1, y2);
      return std::exp(tau * complex(x1, r)) / std::sqrt(r) *
             std::exp(complex(0, mu * th));
    });
  }
  return nodal(box, [&](double, double y1, double y2) {
    return cross_amplitude(ec, p, y1, y2);
  });
}

MomentResult extract_moment(const ForwardStage& fs, const ExperimentConfig& ec,
                            const Probe& p, double tau, double lambda,
                            const Eigen::VectorXcd* u2_cache,
                            const Eigen::VectorXcd* a2_cache,
                            const Eigen::VectorXcd* u1_cache,
                            const Eigen::VectorXcd* a1_cache) {
  Eigen::VectorXcd a1s, a2s, u1s, u2s;
  if (!a1_cache) a1s = probe_field_u1(ec, fs.box, p, tau, lambda);
  const Eigen::VectorXcd& a1 = a1_cache ? *a1_cache : a1s;
  if (!a2_cache) a2s = probe_field_u2(ec, fs.box, p, tau, lambda);
  const Eigen::VectorXcd& a2 = a2_cache ? *a2_cache : a2s;
  if (!u1_cache) u1s = fwd::solve_dirichlet(fs.sys_q, trace_of(fs.sys_q, a1));
  const Eigen::VectorXcd& u1 = u1_cache ? *u1_cache : u1s;
  if (!u2_cache) u2s = fwd::solve_dirichlet(fs.sys_0, trace_of(fs.sys_0, a2));
  const Eigen::VectorXcd& u2 = u2_cache ? *u2_cache : u2s;

  MomentResult mr;
  mr.tau = tau;
  mr.boundary = fwd::form_bilin(fs.sys_q, u1, u2) - fwd::form_bilin(fs.sys_0, u2, u1);
  const double V = fs.box.cell_volume();
  complex model = 0;
  double budget = 0, scale = 0;
  for (int n = 0; n < fs.box.npoints(); ++n) {
    complex q = fs.q_nodes[n];
    if (q == 0.0) continue;
    model += q * a1[n] * a2[n] * V;
    budget += std::abs(q) * (std::abs(u1[n] - a1[n]) * std::abs(u2[n]) +
                             std::abs(a1[n]) * std::abs(u2[n] - a2[n])) * V;
    scale += std::abs(q) * std::abs(a1[n]) * std::abs(a2[n]) * V;
  }
  mr.model = model;
  mr.budget = budget;
  mr.scale = scale;
  mr.within_tol = scale > 0 && budget <= ec.extract_tol * scale;
  return mr;
}

MomentResult extract_moment_adaptive(const ForwardStage& fs,
                                     const ExperimentConfig& ec,
                                     const Probe& p, double lambda) {
  if (p.kind != Probe::Kind::fan) {
    MomentResult mr = extract_moment(fs, ec, p, 0.0, lambda);
    mr.tau_steps = 1;
    return mr;
  }
  MomentResult best;
  int steps = 0;
  for (double tau : ec.tau_schedule) {
    MomentResult mr = extract_moment(fs, ec, p, tau, lambda);
    ++steps;
    if (steps == 1 || mr.budget < best.budget) best = mr;
    if (best.within_tol) break;  // increasing schedule: stop once below tol
  }
  best.tau_steps = steps;
  return best;
}

Eigen::VectorXcd deconvolve_fan(const Eigen::VectorXcd& moments,
                                const std::vector<int>& orders,
                                double cond_limit) {
  if (moments.size() != static_cast<int>(orders.size()))
    throw std::runtime_error("deconvolve_fan: size mismatch");
  int kmax = 0;
  for (int k : orders) kmax = std::max(kmax, std::abs(k));
  const int nc = 2 * kmax + 1;
  // moment with product harmonic k is int G(theta) e^{ik theta} dtheta
  // = 2 pi g_hat(-k); solve the probe Gram system in the coefficient basis
  Eigen::MatrixXcd G(moments.size(), nc);
  G.setZero();
  for (int i = 0; i < moments.size(); ++i)
    G(i, -orders[i] + kmax) = 2 * M_PI;
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(G, Eigen::ComputeThinU | Eigen::ComputeThinV);
  double smin = svd.singularValues().minCoeff();
  if (smin <= 0 || svd.singularValues().maxCoeff() / smin > cond_limit)
    throw std::runtime_error(
        "deconvolve_fan: probe Gram system condition number exceeds limit; "
        "the b-probe family does not resolve the requested angular band");
  return svd.solve(moments);
}

FLambdaField recover_f_lambda(const ExperimentConfig& ec, double lambda,
                              const std::vector<Probe>& probes,
                              const std::vector<MomentResult>& moments) {
  xray::GridSpec gs{ec.recon_grid_n, ec.disk_radius};
  DiskBasis basis = build_disk_basis(gs, ec.zernike_order);
  const int npx = static_cast<int>(basis.pix.size());
  const int nrows = static_cast<int>(probes.size());
  const double cell = gs.cell();
  Eigen::MatrixXcd A(nrows, basis.q.cols());
  Eigen::VectorXcd m(nrows);
  for (int i = 0; i < nrows; ++i) {
    Eigen::VectorXcd ker(npx);
    for (int ip = 0; ip < npx; ++ip) {
      Vec2 y = gs.point(basis.pix[ip] / gs.n, basis.pix[ip] % gs.n);
      ker[ip] = moment_kernel(ec, probes[i], lambda, y.x + ec.center[0],
                              y.y + ec.center[1]) * cell;
    }
    double rn = ker.norm();
    if (rn == 0) rn = 1;
    A.row(i) = (ker.transpose() * basis.q) / rn;
    m[i] = moments[i].boundary / rn;
  }
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& S = svd.singularValues();
  const double alpha = ec.ridge_rel * S[0];
  Eigen::VectorXcd t = svd.matrixU().adjoint() * m;
  for (int i = 0; i < t.size(); ++i)
    t[i] *= S[i] / (S[i] * S[i] + alpha * alpha);
  Eigen::VectorXcd c = svd.matrixV() * t;

  FLambdaField fl;
  fl.lambda = lambda;
  fl.zernike = c;
  fl.residual = m.norm() > 0 ? (A * c - m).norm() / m.norm() : 0.0;
  fl.f.gs = gs;
  fl.f.v = Eigen::VectorXcd::Zero(gs.npoints());
  Eigen::VectorXcd vals = basis.q * c;
  for (int ip = 0; ip < npx; ++ip) fl.f.v[basis.pix[ip]] = vals[ip];
  fl.ok = S[0] > 0 && std::isfinite(fl.residual);
  return fl;
}

double rel_error_lp(const fwd::Box& box, const Eigen::VectorXcd& a,
                    const Eigen::VectorXcd& b, double p) {
  double num = 0, den = 0;
  for (int n = 0; n < box.npoints(); ++n) {
    num += std::pow(std::abs(a[n] - b[n]), p);
    den += std::pow(std::abs(b[n]), p);
  }
  return den > 0 ? std::pow(num / den, 1.0 / p) : std::pow(num, 1.0 / p);
}

namespace {

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double s() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  }
};

// per-lambda moment block: probes plus extraction results in a fixed order
struct MomentBlock {
  std::vector<Probe> probes;
  std::vector<MomentResult> res;
};

std::vector<Probe> make_probes(const ExperimentConfig& ec) {
  std::vector<Probe> out;
  const int nom = 4 * ec.omegas_per_side;
  for (int io = 0; io < nom; ++io) {
    for (double mu1 : {-0.5, 0.5}) {
      for (double mu2 : {-0.5, 0.5}) {
        Probe p;
        p.kind = Probe::Kind::fan;
        p.iomega = io;
        p.mu1 = mu1;
        p.mu2 = mu2;
        out.push_back(p);
      }
      for (int n = -ec.poly_order; n <= ec.poly_order; ++n) {
        Probe p;
        p.kind = Probe::Kind::poly;
        p.iomega = io;
        p.mu1 = mu1;
        p.n = n;
        out.push_back(p);
      }
      for (double kap : ec.kappa_grid)
        for (int d = 0; d < ec.expo_dirs; ++d) {
          Probe p;
          p.kind = Probe::Kind::expo;
          p.iomega = io;
          p.mu1 = mu1;
          p.kappa = kap;
          p.phi = 2 * M_PI * d / ec.expo_dirs;
          out.push_back(p);
        }
    }
  }
  return out;
}

}  // namespace

ReconReport run_experiment(const ExperimentConfig& ec) {
  namespace fs = std::filesystem;
  ReconReport rep;
  auto stage = [&](const std::string& name, auto&& body) {
    Timer t;
    try {
      body();
    } catch (const std::exception& e) {
      rep.stages.push_back({name, t.s(), false, e.what()});
      throw std::runtime_error("stage '" + name + "' failed: " + e.what());
    }
    rep.stages.push_back({name, t.s(), true, ""});
  };

  stage("validate", [&] { ec.validate(); });

  geo::SimpleManifold2D man = geo::SimpleManifold2D::flat_disk(ec.disk_radius);
  stage("geometry", [&] {
    for (const auto& om : ec.omegas()) {
      Vec2 rel{om[0] - ec.center[0], om[1] - ec.center[1]};
      if (man.inside(rel))
        throw std::runtime_error("probe vertex inside the cross-section disk");
    }
  });

  ForwardStage fwstage;
  stage("forward", [&] { fwstage = build_forward(ec); });

  const int nlam = static_cast<int>(std::llround(ec.lambda_max / ec.dlambda)) + 1;
  std::vector<double> lambdas(nlam);
  for (int i = 0; i < nlam; ++i) lambdas[i] = i * ec.dlambda;
  const std::vector<Probe> probes = make_probes(ec);
  std::vector<MomentBlock> blocks(nlam);

  stage("moments", [&] {
    // tau-independent u2 probes are shared by every (omega, lambda) task
    std::vector<Probe> shared;
    for (const auto& p : probes)
      if (p.kind != Probe::Kind::fan && p.iomega == 0 && p.mu1 > 0)
        shared.push_back(p);
    std::vector<Eigen::VectorXcd> a2s(shared.size()), u2s(shared.size());
    for (size_t i = 0; i < shared.size(); ++i) {
      a2s[i] = probe_field_u2(ec, fwstage.box, shared[i], 0.0, 0.0);
      u2s[i] = fwd::solve_dirichlet(fwstage.sys_0, trace_of(fwstage.sys_0, a2s[i]));
    }
    auto shared_index = [&](const Probe& p) -> int {
      for (size_t i = 0; i < shared.size(); ++i) {
        const Probe& s = shared[i];
        if (s.kind == p.kind && s.n == p.n && s.kappa == p.kappa && s.phi == p.phi)
          return static_cast<int>(i);
      }
      return -1;
    };
    for (auto& b : blocks) {
      b.probes = probes;
      b.res.resize(probes.size());
    }
    const int nom = 4 * ec.omegas_per_side;
    std::atomic<int> next{0};
    auto worker = [&] {
      for (;;) {
        int io = next.fetch_add(1);
        if (io >= nom) return;
        for (int il = 0; il < nlam; ++il) {
          double lam = lambdas[il];
          // u1 for the enrichment probes: tau = 0, two angular orders
          std::map<int, Eigen::VectorXcd> a1c, u1c;
          for (int s = 0; s < 2; ++s) {
            Probe p;
            p.iomega = io;
            p.mu1 = s ? 0.5 : -0.5;
            a1c[s] = probe_field_u1(ec, fwstage.box, p, 0.0, lam);
            u1c[s] = fwd::solve_dirichlet(fwstage.sys_q,
                                          trace_of(fwstage.sys_q, a1c[s]));
          }
          for (size_t ip = 0; ip < probes.size(); ++ip) {
            const Probe& p = probes[ip];
            if (p.iomega != io) continue;
            MomentResult mr;
            if (p.kind == Probe::Kind::fan) {
              mr = extract_moment_adaptive(fwstage, ec, p, lam);
            } else {
              int s = p.mu1 > 0 ? 1 : 0, sh = shared_index(p);
              mr = extract_moment(fwstage, ec, p, 0.0, lam, &u2s[sh], &a2s[sh],
                                  &u1c[s], &a1c[s]);
            }
            if (ec.dn_noise > 0) {
              std::mt19937_64 rng(mix_seed(ec.seed, ip, il));
              std::normal_distribution<double> nd(0.0, ec.dn_noise);
              mr.boundary += complex(nd(rng), nd(rng)) * std::abs(mr.boundary) /
                             std::sqrt(2.0);
            }
            blocks[il].res[ip] = mr;
          }
        }
      }
    };
    std::vector<std::thread> pool;
    int nthreads = std::max(1, ec.threads);
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (const auto& b : blocks)
      for (const auto& r : b.res) {
        ++rep.moments_total;
        double rel = r.scale > 0 ? r.budget / r.scale : 0.0;
        rep.moment_budget_max = std::max(rep.moment_budget_max, rel);
        if (!r.within_tol) ++rep.moments_over_tol;
      }
  });

  // ground-truth lambda slices for diagnostics: f_lambda = q_hat_x(lambda) * wy
  auto f_true_slice = [&](double lam) {
    xray::GridSpec gs{ec.recon_grid_n, ec.disk_radius};
    const double Lx = ec.x_hi - ec.x_lo, x0 = 0.5 * (ec.x_lo + ec.x_hi);
    complex qx = 0;
    const int nq = 4001;
    for (int i = 0; i < nq; ++i) {
      double x = ec.x_lo + (ec.x_hi - ec.x_lo) * i / (nq - 1.0);
      double w = (i == 0 || i == nq - 1) ? 0.5 : 1.0;
      double wx = std::cos(M_PI * (x - x0) / Lx);
      qx += w * wx * wx * std::exp(complex(0, lam * x));
    }
    qx *= (ec.x_hi - ec.x_lo) / (nq - 1.0);
    xray::GridFn f;
    f.gs = gs;
    f.v = Eigen::VectorXcd::Zero(gs.npoints());
    for (int i = 0; i < gs.n; ++i)
      for (int j = 0; j < gs.n; ++j) {
        Vec2 p = gs.point(i, j);
        double r2 = p.dot(p), t = r2 / (ec.y_support * ec.y_support);
        if (t >= 1.0) continue;
        f.v[gs.id(i, j)] = complex(ec.amp, ec.imag_amp) * qx *
                           std::exp(-r2 / (ec.y_sigma * ec.y_sigma)) *
                           std::exp(-t / (1 - t));
      }
    return f;
  };

  stage("f_lambda", [&] {
    for (int il = 0; il < nlam; ++il) {
      FLambdaField fl =
          recover_f_lambda(ec, lambdas[il], blocks[il].probes, blocks[il].res);
      if (ec.xray_diagnostic) {
        try {
          fl.xray_error = [&] {
            // band-limited fan data via the probe Gram system, then the
            // ray-transform normal-equation inversion as a reference path
            const auto oms = ec.omegas();
            const int nom = static_cast<int>(oms.size()), nray = 4;
            xray::BoundaryGrid bg;
            bg.nbeta = nom;
            bg.nalpha = nray;
            bg.step = 5e-3;
            bg.s.resize(nom * nray);
            xray::RayTransformData data;
            data.lambda = lambdas[il];
            data.values.resize(nom * nray);
            for (int io = 0; io < nom; ++io) {
              Eigen::VectorXcd fm(4);
              std::vector<int> orders;
              int got = 0;
              for (size_t ip = 0; ip < probes.size(); ++ip) {
                const Probe& p = probes[ip];
                if (p.kind != Probe::Kind::fan || p.iomega != io) continue;
                fm[got] = blocks[il].res[ip].boundary;
                orders.push_back(static_cast<int>(std::lround(p.mu1 + p.mu2)));
                ++got;
              }
              Eigen::VectorXcd ghat = deconvolve_fan(fm.head(got), orders, ec.cond_limit);
              Fan fan(oms[io], ec.center);
              Vec2 om{oms[io][0] - ec.center[0], oms[io][1] - ec.center[1]};
              double dw = om.norm();
              double arc = std::asin(0.9 * ec.disk_radius / dw);
              for (int ir = 0; ir < nray; ++ir) {
                double th = -arc + (ir + 0.5) * 2 * arc / nray;
                complex g = 0;
                for (int k = -1; k <= 1; ++k)
                  g += ghat[k + 1] * std::exp(complex(0, k * th));
                double ang = fan.dirc + th;
                Vec2 dir{std::cos(ang), std::sin(ang)};
                double b = om.dot(dir);
                double disc = b * b - om.dot(om) + ec.disk_radius * ec.disk_radius;
                double t0 = -b - std::sqrt(std::max(disc, 0.0));
                xray::BoundarySample& s = bg.s[io * nray + ir];
                s.x = om + t0 * dir;
                s.xi = dir;
                s.mu = -(dir.dot(s.x)) / ec.disk_radius;
                s.tau = 2 * std::sqrt(std::max(disc, 0.0));
                s.w = 2 * arc / nray;
                data.values[io * nray + ir] = g * std::exp(lambdas[il] * t0);
              }
            }
            xray::GridSpec gs{ec.recon_grid_n, ec.disk_radius};
            xray::InvertReport ir;
            xray::GridFn fx =
                xray::invert_normal(man, bg, data, gs, 1e-6, &ir);
            xray::GridFn ft = f_true_slice(lambdas[il]);
            double num = (fx.v - ft.v).norm(), den = ft.v.norm();
            return den > 0 ? num / den : num;
          }();
        } catch (const std::exception&) {
          fl.xray_error = -1.0;  // recorded, recovery proceeds on this lambda
        }
      }
      rep.slices.push_back(std::move(fl));
    }
  });

  stage("recovery", [&] {
    const fwd::Box& box = fwstage.box;
    rep.q_true = fwstage.q_nodes;
    rep.q_hat = Eigen::VectorXcd::Zero(box.npoints());
    for (int i = 0; i < box.n[0]; ++i)
      for (int j = 0; j < box.n[1]; ++j)
        for (int k = 0; k < box.n[2]; ++k) {
          double x1 = box.coord(0, i);
          Vec2 y{box.coord(1, j) - ec.center[0], box.coord(2, k) - ec.center[1]};
          complex acc = 0;
          for (const auto& fl : rep.slices) {
            if (!fl.ok) continue;  // flagged gap: proceed on surviving slices
            complex term = fl.f.interp(y) * std::exp(complex(0, -fl.lambda * x1));
            // real potential: the negative band is the conjugate mirror
            acc += fl.lambda == 0 ? complex(term.real(), 0.0)
                                  : complex(2 * term.real(), 0.0);
          }
          rep.q_hat[box.id(i, j, k)] = acc * ec.dlambda / (2 * M_PI);
        }
    rep.rel_l2 = rel_error_lp(box, rep.q_hat, rep.q_true, 2.0);
    rep.rel_l32 = rel_error_lp(box, rep.q_hat, rep.q_true, 1.5);
  });

  stage("artifacts", [&] {
    fs::create_directories(ec.out_dir);
    const fs::path dir(ec.out_dir);
    {
      io::CsvWriter csv(dir / "moments.csv",
                        {"lambda", "iomega", "kind", "mu1", "mu2", "n", "kappa",
                         "phi", "tau", "tau_steps", "boundary_re", "boundary_im",
                         "model_re", "model_im", "budget", "scale", "within_tol"});
      for (int il = 0; il < nlam; ++il)
        for (size_t ip = 0; ip < probes.size(); ++ip) {
          const Probe& p = probes[ip];
          const MomentResult& r = blocks[il].res[ip];
          csv.row({io::CsvWriter::num(lambdas[il]),
                   std::to_string(p.iomega),
                   p.kind == Probe::Kind::fan    ? "fan"
                   : p.kind == Probe::Kind::poly ? "poly"
                                                 : "expo",
                   io::CsvWriter::num(p.mu1), io::CsvWriter::num(p.mu2),
                   std::to_string(p.n), io::CsvWriter::num(p.kappa),
                   io::CsvWriter::num(p.phi), io::CsvWriter::num(r.tau),
                   std::to_string(r.tau_steps),
                   io::CsvWriter::num(r.boundary.real()),
                   io::CsvWriter::num(r.boundary.imag()),
                   io::CsvWriter::num(r.model.real()),
                   io::CsvWriter::num(r.model.imag()),
                   io::CsvWriter::num(r.budget), io::CsvWriter::num(r.scale),
                   r.within_tol ? "1" : "0"});
        }
    }
    {
      io::CsvWriter csv(dir / "flambda.csv",
                        {"lambda", "residual", "xray_error", "ok"});
      for (const auto& fl : rep.slices)
        csv.row({io::CsvWriter::num(fl.lambda), io::CsvWriter::num(fl.residual),
                 io::CsvWriter::num(fl.xray_error), fl.ok ? "1" : "0"});
    }
    {
      std::vector<complex> qt(rep.q_true.data(), rep.q_true.data() + rep.q_true.size());
      std::vector<complex> qh(rep.q_hat.data(), rep.q_hat.data() + rep.q_hat.size());
      std::vector<std::uint64_t> dims{(std::uint64_t)fwstage.box.n[0],
                                      (std::uint64_t)fwstage.box.n[1],
                                      (std::uint64_t)fwstage.box.n[2]};
      io::write_grid(dir / "q_true.cgog", io::complex_grid(dims, qt));
      io::write_grid(dir / "q_hat.cgog", io::complex_grid(dims, qh));
      std::vector<complex> fall;
      for (const auto& fl : rep.slices)
        fall.insert(fall.end(), fl.f.v.data(), fl.f.v.data() + fl.f.v.size());
      io::write_grid(dir / "f_lambda.cgog",
                     io::complex_grid({(std::uint64_t)rep.slices.size(),
                                       (std::uint64_t)ec.recon_grid_n,
                                       (std::uint64_t)ec.recon_grid_n},
                                      fall));
    }
    {
      io::CsvWriter csv(dir / "report.csv", {"key", "value"});
      csv.row({"rel_l2", io::CsvWriter::num(rep.rel_l2)});
      csv.row({"rel_l32", io::CsvWriter::num(rep.rel_l32)});
      csv.row({"moments_total", std::to_string(rep.moments_total)});
      csv.row({"moments_over_tol", std::to_string(rep.moments_over_tol)});
      csv.row({"moment_budget_max", io::CsvWriter::num(rep.moment_budget_max)});
      csv.row({"lambda_band", io::CsvWriter::num(ec.lambda_max)});
      csv.row({"seed", std::to_string(ec.seed)});
      for (const auto& fl : rep.slices)
        csv.row({"residual_lambda_" + io::CsvWriter::num(fl.lambda),
                 io::CsvWriter::num(fl.residual)});
    }
    rep.report_hash = io::hash_file(dir / "report.csv");
    {
      std::ofstream hf(dir / "hashes.txt");
      for (const char* name :
           {"report.csv", "moments.csv", "flambda.csv", "q_true.cgog",
            "q_hat.cgog", "f_lambda.cgog"})
        hf << name << " " << io::hash_file(dir / name) << "\n";
    }
    {
      io::CsvWriter csv(dir / "timings.csv", {"stage", "seconds", "ok"});
      for (const auto& s : rep.stages)
        csv.row({s.stage, io::CsvWriter::num(s.seconds), s.ok ? "1" : "0"});
    }
  });

  return rep;
}

}  // namespace cgolab::pipe
