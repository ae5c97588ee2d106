#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cgolab/common.hpp"
#include "cgolab/config.hpp"
#include "cgolab/forward.hpp"
#include "cgolab/xray.hpp"

namespace cgolab::pipe {

// ---------------------------------------------------------------------------
// End-to-end reconstruction pipeline on the cylinder I x R^2:
//
//   DN maps (forward module)  ->  boundary moments against exact probe pairs
//   ->  attenuated fan data of f_lambda (Gram deconvolution per vertex)
//   ->  f_lambda on the cross-section disk (regularized moment inversion,
//       plus an attenuated-ray-transform diagnostic via xray::invert_normal)
//   ->  inverse Fourier sum over the lambda band  ->  q_hat(x1, y).
//
// Probes are exact solutions, so the extraction identity
//   <(Lambda_q - Lambda_0) u1, u2> = sum_nodes q u1 u2 V
// holds discretely and every moment carries a computable error budget
//   |boundary - model| <= sum |q| (|r1||u2| + |a1||r2|) V
// with r_j = u_j - a_j the measured discrete CGO remainders.
// ---------------------------------------------------------------------------

// one probe pair: u1 = e^{(-tau+i lambda)(x1+ir)} r^{-1/2} e^{i mu1 theta}
// in fan coordinates about the vertex omega; u2 either the opposite-exponent
// CGO e^{tau(x1+ir)} r^{-1/2} e^{i mu2 theta} (fan probe, product harmonic
// k = mu1+mu2 in {-1,0,1}) or a tau-independent exact solution of the
// unperturbed equation (harmonic-polynomial / exponential enrichment).
struct Probe {
  enum class Kind { fan, poly, expo };
  Kind kind = Kind::fan;
  int iomega = 0;     // vertex index into ExperimentConfig::omegas
  double mu1 = 0.5;   // half-integer angular order of u1 (+-1/2 exact)
  double mu2 = 0.5;   // fan: half-integer order of u2
  int n = 0;          // poly: ((z-c)/R)^n, conjugated for n < 0
  double kappa = 0.0; // expo: u2 = exp(i kappa e^{i phi} (z-c)/R)
  double phi = 0.0;
};

struct ExperimentConfig {
  // geometry: box [x_lo,x_hi] x [c +- half_width]^2 in cylinder coordinates,
  // cross-section disk of radius disk_radius about center
  double x_lo = -0.6, x_hi = 0.6;
  std::array<double, 2> center{0.0, 0.0};
  double half_width = 0.26;
  double disk_radius = 0.30;
  std::array<int, 3> box_n{61, 27, 27};

  // ground-truth potential: amp * cos^2(pi x1 / Lx) * radial bump
  double amp = 2.0;
  double y_sigma = 0.13;    // Gaussian core width
  double y_support = 0.24;  // smooth compact cutoff radius
  double imag_amp = 0.0;    // optional imaginary part coefficient

  // probes
  int omegas_per_side = 6;    // vertices per box side (rectangle ring)
  double omega_offset = 0.08; // standoff outside the box faces
  std::vector<double> tau_schedule{2.0, 4.0, 6.0};
  double extract_tol = 2e-2;  // relative moment budget target
  int poly_order = 6;         // |n| <= poly_order polynomial probes
  std::vector<double> kappa_grid{};  // optional exponential enrichment
  int expo_dirs = 8;

  // lambda band (integer grid 0..lambda_max, mirrored by conjugation)
  double lambda_max = 8.0, dlambda = 1.0;
  double lambda_threshold = 10.0;  // validation guard

  // recovery
  int zernike_order = 12;
  double ridge_rel = 1e-3;   // Tikhonov level relative to top singular value
  double cond_limit = 1e6;   // Gram-system abort threshold
  int recon_grid_n = 65;     // disk grid for FLambdaField
  bool xray_diagnostic = true;

  // noise / reproducibility
  double dn_noise = 0.0;  // relative Gaussian perturbation of DN moments
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out_dir = "out";

  std::vector<std::array<double, 2>> omegas() const;  // rectangle ring
  static ExperimentConfig load(const io::Config& cfg);
  void validate() const;  // throws std::runtime_error with stage diagnostics
};

// forward stage: both Dirichlet systems and the probe trace plumbing
struct ForwardStage {
  fwd::Box box;
  Eigen::VectorXcd q_nodes;
  fwd::DirichletSystem sys_q, sys_0;
};
ForwardStage build_forward(const ExperimentConfig& ec);

// analytic probe fields evaluated on box nodes
Eigen::VectorXcd probe_field_u1(const ExperimentConfig& ec, const fwd::Box& box,
                                const Probe& p, double tau, double lambda);
Eigen::VectorXcd probe_field_u2(const ExperimentConfig& ec, const fwd::Box& box,
                                const Probe& p, double tau, double lambda);

struct MomentResult {
  complex boundary{};  // <(Lambda_q - Lambda_0) u1, u2> (weak pairing)
  complex model{};     // sum q a1 a2 V (discrete model integral)
  double budget = 0.0; // pointwise-Hoelder bound on |boundary - model|
  double scale = 0.0;  // sum |q a1 a2| V, reference magnitude
  double tau = 0.0;    // schedule entry actually used
  int tau_steps = 1;   // schedule entries tried
  bool within_tol = false;
};

// extraction with a fixed tau; boundary/model/budget as documented above
MomentResult extract_moment(const ForwardStage& fs, const ExperimentConfig& ec,
                            const Probe& p, double tau, double lambda,
                            const Eigen::VectorXcd* u2_cache = nullptr,
                            const Eigen::VectorXcd* a2_cache = nullptr,
                            const Eigen::VectorXcd* u1_cache = nullptr,
                            const Eigen::VectorXcd* a1_cache = nullptr);

// walks the tau schedule until the relative budget is below extract_tol,
// keeping the best entry (cap recorded via tau_steps / within_tol)
MomentResult extract_moment_adaptive(const ForwardStage& fs,
                                     const ExperimentConfig& ec,
                                     const Probe& p, double lambda);

// angular deconvolution of fan moments: probe Gram system over the product
// harmonics e^{ik theta}, |k| <= K; returns Fourier coefficients g_hat of the
// attenuated fan transform G(theta) = int f_lambda e^{-lambda r} dr.
// Throws when the Gram condition number exceeds cond_limit.
Eigen::VectorXcd deconvolve_fan(const Eigen::VectorXcd& moments,
                                const std::vector<int>& orders,
                                double cond_limit);

struct FLambdaField {
  double lambda = 0.0;
  xray::GridFn f;                  // recovered slice on the disk grid
  Eigen::VectorXcd zernike;        // coefficients in the (orthonormalized) basis
  double residual = 0.0;           // relative LS data misfit
  double xray_error = -1.0;        // optional invert_normal diagnostic misfit
  bool ok = true;
};

// per-lambda recovery from all extracted moments (regularized Zernike LS);
// moments/probes must belong to a single lambda
FLambdaField recover_f_lambda(const ExperimentConfig& ec, double lambda,
                              const std::vector<Probe>& probes,
                              const std::vector<MomentResult>& moments);

struct StageRecord {
  std::string stage;
  double seconds = 0.0;
  bool ok = true;
  std::string detail;
};

struct ReconReport {
  Eigen::VectorXcd q_hat;   // recovered potential on box nodes
  Eigen::VectorXcd q_true;  // ground truth on box nodes
  double rel_l2 = 1.0;      // |q_hat - q|_2 / |q|_2 (volume weighted)
  double rel_l32 = 1.0;     // same in L^{3/2}
  double moment_budget_max = 0.0;   // worst relative budget accepted
  int moments_total = 0, moments_over_tol = 0;
  std::vector<FLambdaField> slices;
  std::vector<StageRecord> stages;
  std::uint64_t report_hash = 0;    // FNV-1a over the written report.csv
};

// full pipeline with artifacts (CGOG grids, CSV logs, hashes.txt) under
// ec.out_dir; stage failures throw with the stage name in the message
ReconReport run_experiment(const ExperimentConfig& ec);

// relative Lp error between nodal fields, volume weighted
double rel_error_lp(const fwd::Box& box, const Eigen::VectorXcd& a,
                    const Eigen::VectorXcd& b, double p);

}  // namespace cgolab::pipe
