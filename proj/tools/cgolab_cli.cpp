// cgolab command line: verification drivers for the estimate modules and
// the end-to-end reconstruction pipeline.  Every subcommand reads the same
// plain-text config format (sections [carleman], [xray], [cgo], [geometry],
// [probes], [band], [recovery], [run]) and writes CSV/CGOG artifacts under
// the output directory.
#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <filesystem>
#include <random>

#include "cgolab/carleman.hpp"
#include "cgolab/cgo.hpp"
#include "cgolab/forward.hpp"
#include "cgolab/geometry.hpp"
#include "cgolab/gridio.hpp"
#include "cgolab/pipeline.hpp"
#include "cgolab/xray.hpp"

using namespace cgolab;
namespace sf = std::filesystem;

namespace {

struct GlobalOpts {
  std::string config;
  std::string out = "out";
  int threads = 1;
  std::uint64_t seed = 1;

  io::Config load() const {
    io::Config cfg;
    if (!config.empty()) cfg = io::Config::parse_file(config);
    return cfg;
  }
};

car::ProductCylinder cylinder_from(const io::Config& cfg) {
  car::ProductCylinder cyl;
  cyl.xa = cfg.num("carleman.xa", -1.0);
  cyl.xb = cfg.num("carleman.xb", 1.0);
  cyl.Nx = (int)cfg.integer("carleman.nx", 41);
  int nt = (int)cfg.integer("carleman.nt", 48);
  double kmax = cfg.num("carleman.kmax", 14.0);
  cyl.basis = geo::build_flat_torus_basis(2 * M_PI / std::sqrt(2.0),
                                          2 * M_PI / std::sqrt(3.0), nt, nt,
                                          kmax);
  return cyl;
}

int cmd_verify_carleman(const GlobalOpts& g) {
  auto cfg = g.load();
  auto cyl = cylinder_from(cfg);
  std::vector<double> taus = cfg.has("carleman.tau_list")
                                 ? cfg.num_list("carleman.tau_list")
                                 : std::vector<double>{8.0, 16.0, 32.0};
  int trials = (int)cfg.integer("carleman.trials", 6);
  sf::create_directories(g.out);

  auto rows = car::verify_carleman_sweep(cyl, taus, trials, g.seed);
  io::CsvWriter csv(sf::path(g.out) / "carleman_sweep.csv",
                    {"tau", "admissible", "l2_ratio", "h1_ratio", "lp_ratio",
                     "inv_ratio"});
  double lo = 1e300, hi = 0;
  for (const auto& r : rows) {
    csv.row({io::CsvWriter::num(r.tau), r.admissible ? "1" : "0",
             io::CsvWriter::num(r.l2_ratio), io::CsvWriter::num(r.h1_ratio),
             io::CsvWriter::num(r.lp_ratio), io::CsvWriter::num(r.inv_ratio)});
    if (r.admissible) {
      lo = std::min(lo, r.l2_ratio);
      hi = std::max(hi, r.l2_ratio);
    }
    std::printf("tau %6.1f  adm %d  |tau||G|_L2 %.4f  H1 %.4f  L6/L6_5 %.4f\n",
                r.tau, (int)r.admissible, r.l2_ratio, r.h1_ratio, r.lp_ratio);
  }
  std::printf("L2 ratio spread over sweep: %.3f\n", hi / lo);

  auto clusters = car::verify_cluster_estimates(cyl.basis, trials, g.seed);
  io::CsvWriter ccsv(sf::path(g.out) / "cluster_ratios.csv",
                     {"k", "size", "sogge_ratio", "dual_ratio"});
  for (const auto& c : clusters)
    ccsv.row({std::to_string(c.k), std::to_string(c.size),
              io::CsvWriter::num(c.sogge_ratio),
              io::CsvWriter::num(c.dual_ratio)});
  std::printf("wrote %s/{carleman_sweep,cluster_ratios}.csv\n", g.out.c_str());
  return 0;
}

int cmd_verify_xray(const GlobalOpts& g) {
  auto cfg = g.load();
  double R = cfg.num("xray.radius", 1.0);
  int nbeta = (int)cfg.integer("xray.nbeta", 48);
  int nalpha = (int)cfg.integer("xray.nalpha", 32);
  int gridn = (int)cfg.integer("xray.grid_n", 33);
  double step = cfg.num("xray.step", 5e-3);
  double ridge = cfg.num("xray.ridge", 1e-6);
  auto man = geo::SimpleManifold2D::flat_disk(R);
  auto bg = xray::build_boundary_grid(man, nbeta, nalpha, step);
  sf::create_directories(g.out);
  io::CsvWriter csv(sf::path(g.out) / "xray_verify.csv",
                    {"check", "lambda", "value"});

  // Santalo volume: fan quadrature of 1 over SM0 vs 2 pi^2 R^2
  double vol = xray::santalo_fan(man, bg, [](Vec2, Vec2) { return 1.0; });
  double vol_rel = std::abs(vol - 2 * M_PI * M_PI * R * R) /
                   (2 * M_PI * M_PI * R * R);
  csv.row({"santalo_rel", "0", io::CsvWriter::num(vol_rel)});
  std::printf("santalo volume rel defect %.2e\n", vol_rel);

  // adjoint identity on random smooth pairs
  std::mt19937_64 rng(g.seed);
  std::uniform_real_distribution<double> un(-1.0, 1.0);
  xray::GridSpec gs{gridn, R};
  for (double lam : {0.0, 0.3}) {
    double worst = 0;
    for (int trial = 0; trial < 3; ++trial) {
      auto bump = [&](Vec2 c, double w) {
        xray::GridFn f;
        f.gs = gs;
        f.v.resize(gs.npoints());
        for (int i = 0; i < gs.n; ++i)
          for (int j = 0; j < gs.n; ++j) {
            Vec2 p = gs.point(i, j);
            double t = (p - c).dot(p - c) / (w * w);
            f.v[gs.id(i, j)] = t < 1 ? std::exp(-t / (1 - t)) : 0.0;
          }
        return f;
      };
      auto f = bump({0.35 * R * un(rng), 0.35 * R * un(rng)}, 0.5 * R);
      auto Tf = xray::ray_transform(man, bg, f, lam);
      // smooth random trig polynomial on the boundary grid, damped by mu
      // so it vanishes toward the excluded tangential band
      complex c0(un(rng), un(rng)), c1(un(rng), un(rng)), c2(un(rng), un(rng));
      Eigen::VectorXcd h(bg.size());
      for (int s = 0; s < bg.size(); ++s) {
        double beta = std::atan2(bg.s[s].x.y, bg.s[s].x.x);
        h[s] = (c0 + c1 * std::exp(complex(0, beta)) +
                c2 * std::exp(complex(0, 2 * beta))) *
               bg.s[s].mu * bg.s[s].mu;
      }
      complex lhs = 0;
      for (int s = 0; s < bg.size(); ++s)
        lhs += bg.s[s].w * bg.s[s].mu * Tf.values[s] * std::conj(h[s]);
      auto Th = xray::adjoint_ray_transform(man, bg, h, lam, gs, 96);
      complex rhs = xray::grid_inner(man, f, Th);
      double fn = std::sqrt(std::abs(xray::grid_inner(man, f, f)));
      double hn = 0;
      for (int s = 0; s < bg.size(); ++s)
        hn += bg.s[s].w * bg.s[s].mu * std::norm(h[s]);
      worst = std::max(worst,
                       std::abs(lhs - rhs) / (fn * std::sqrt(hn) + 1e-300));
    }
    csv.row({"adjoint_rel", io::CsvWriter::num(lam), io::CsvWriter::num(worst)});
    std::printf("adjoint defect (lam %.1f): %.2e\n", lam, worst);

    // phantom round trip through the normal-equation inversion
    xray::GridFn ph;
    ph.gs = gs;
    ph.v.resize(gs.npoints());
    for (int i = 0; i < gs.n; ++i)
      for (int j = 0; j < gs.n; ++j) {
        Vec2 p = gs.point(i, j);
        double t = p.dot(p) / (0.55 * R * 0.55 * R);
        ph.v[gs.id(i, j)] = t < 1 ? std::exp(-t / (1 - t)) : 0.0;
      }
    auto data = xray::ray_transform(man, bg, ph, lam);
    xray::InvertReport ir;
    auto rec = xray::invert_normal(man, bg, data, gs, ridge, &ir);
    double err = (rec.v - ph.v).norm() / ph.v.norm();
    csv.row({"roundtrip_rel", io::CsvWriter::num(lam), io::CsvWriter::num(err)});
    std::printf("round trip rel error (lam %.1f): %.4f (cg iters %d)\n", lam,
                err, ir.iterations);
  }
  std::printf("wrote %s/xray_verify.csv\n", g.out.c_str());
  return 0;
}

int cmd_build_cgo(const GlobalOpts& g) {
  auto cfg = g.load();
  auto cyl = cylinder_from(cfg);
  cgo::Region M;
  M.ma = cfg.num("cgo.ma", -0.6);
  M.mb = cfg.num("cgo.mb", 0.6);
  M.disk.center = {cfg.num("cgo.disk_x", 2.2), cfg.num("cgo.disk_y", 1.8)};
  M.disk.radius = cfg.num("cgo.disk_r", 0.6);
  M.roll_x1 = cfg.num("cgo.roll", 0.25);
  M.roll_r = M.roll_x1;
  cgo::CgoAnsatz an;
  an.omega = {cfg.num("cgo.omega_x", 0.9), cfg.num("cgo.omega_y", 1.8)};
  an.lambda = cfg.num("cgo.lambda", 0.0);
  an.b = Eigen::VectorXcd::Zero(2 * (int)cfg.integer("cgo.bk", 2) + 1);
  an.b[an.K()] = 1.0;
  double amp = cfg.num("cgo.amp", 2.0);
  std::vector<double> taus = cfg.has("cgo.tau_list")
                                 ? cfg.num_list("cgo.tau_list")
                                 : std::vector<double>{8.0, 16.0};

  cgo::Potential q;
  q.q = Eigen::MatrixXcd::Zero(cyl.Nx, cyl.basis.npoints());
  for (int i = 0; i < cyl.Nx; ++i)
    for (int p = 0; p < cyl.basis.npoints(); ++p) {
      double x = cyl.x1(i);
      Vec2 d = M.rel(cyl.basis, cyl.basis.nodes[p]);
      double rho2 = d.dot(d) / (0.35 * 0.35);
      double xw = (x - M.ma) * (M.mb - x);
      if (rho2 >= 1.0 || xw <= 0.0) continue;
      q.q(i, p) = amp * std::exp(-rho2 / (1.0 - rho2)) *
                  std::exp(-0.04 / (xw * xw));
    }

  sf::create_directories(g.out);
  io::CsvWriter csv(sf::path(g.out) / "cgo.csv",
                    {"tau", "f_l2", "r0_l2", "r0_h1", "r0_l6", "rt_l2",
                     "rt_l6", "contraction", "terms", "residual"});
  for (double tau : taus) {
    auto sol = cgo::build_cgo(cyl, M, q, an, tau);
    double res = cgo::cgo_residual(cyl, M, q, sol, 0.05);
    csv.row({io::CsvWriter::num(tau), io::CsvWriter::num(sol.f_l2),
             io::CsvWriter::num(sol.r0_l2), io::CsvWriter::num(sol.r0_h1),
             io::CsvWriter::num(sol.r0_l6), io::CsvWriter::num(sol.rt_l2),
             io::CsvWriter::num(sol.rt_l6), io::CsvWriter::num(sol.contraction),
             std::to_string(sol.terms), io::CsvWriter::num(res)});
    std::printf(
        "tau %6.1f: |r~|_L2 %.3e |r~|_L6 %.3e contraction %.3f terms %d\n",
        tau, sol.rt_l2, sol.rt_l6, sol.contraction, sol.terms);
  }
  std::printf("wrote %s/cgo.csv\n", g.out.c_str());
  return 0;
}

int cmd_dn_map(const GlobalOpts& g) {
  auto cfg = g.load();
  auto ec = pipe::ExperimentConfig::load(cfg);
  ec.validate();
  auto fs = pipe::build_forward(ec);
  sf::create_directories(g.out);

  auto dnq = fwd::dn_map(fs.sys_q);
  auto dn0 = fwd::dn_map(fs.sys_0);
  const int nb = (int)dnq.m.rows();
  auto dump = [&](const char* name, const Eigen::MatrixXcd& m) {
    std::vector<complex> v(m.data(), m.data() + m.size());
    io::write_grid(sf::path(g.out) / name,
                   io::complex_grid({(std::uint64_t)nb, (std::uint64_t)nb}, v));
  };
  dump("dn_q.cgog", dnq.m);
  dump("dn_0.cgog", dn0.m);
  double symq = (dnq.m - dnq.m.transpose()).norm() / dnq.m.norm();
  double diff = (dnq.m - dn0.m).norm();
  io::CsvWriter csv(sf::path(g.out) / "dn_summary.csv", {"key", "value"});
  csv.row({"boundary_nodes", std::to_string(nb)});
  csv.row({"symmetry_defect_q", io::CsvWriter::num(symq)});
  csv.row({"dn_difference_fro", io::CsvWriter::num(diff)});
  std::printf("DN maps %dx%d, symmetry defect %.2e, |DN_q - DN_0|_F %.3e\n",
              nb, nb, symq, diff);
  std::printf("wrote %s/{dn_q,dn_0}.cgog, dn_summary.csv\n", g.out.c_str());
  return 0;
}

int cmd_reconstruct(const GlobalOpts& g) {
  auto cfg = g.load();
  auto ec = pipe::ExperimentConfig::load(cfg);
  ec.threads = g.threads;
  ec.seed = g.seed;
  ec.out_dir = g.out;
  auto rep = pipe::run_experiment(ec);
  for (const auto& s : rep.stages)
    std::printf("stage %-10s %8.2fs %s\n", s.stage.c_str(), s.seconds,
                s.ok ? "ok" : s.detail.c_str());
  std::printf("lambda band [0, %g] step %g (mirrored by conjugation)\n",
              ec.lambda_max, ec.dlambda);
  std::printf("moments: %d extracted, %d over tolerance, worst budget %.3f\n",
              rep.moments_total, rep.moments_over_tol, rep.moment_budget_max);
  std::printf("rel. error: L2 %.4f  L3/2 %.4f\n", rep.rel_l2, rep.rel_l32);
  std::printf("report hash %llu\n", (unsigned long long)rep.report_hash);
  return 0;
}

int cmd_report(const GlobalOpts& g) {
  const sf::path dir(g.out);
  if (!sf::exists(dir / "report.csv"))
    throw std::runtime_error("no report.csv under " + g.out +
                             " (run `reconstruct` first)");
  // errors must be recomputable from the stored grids
  auto qh = io::grid_as_complex(io::read_grid(dir / "q_hat.cgog"));
  auto qt = io::grid_as_complex(io::read_grid(dir / "q_true.cgog"));
  double num = 0, den = 0;
  for (size_t i = 0; i < qh.size(); ++i) {
    num += std::norm(qh[i] - qt[i]);
    den += std::norm(qt[i]);
  }
  std::printf("recomputed rel L2 error from stored grids: %.4f\n",
              den > 0 ? std::sqrt(num / den) : std::sqrt(num));
  std::ifstream rf(dir / "report.csv");
  std::string line;
  while (std::getline(rf, line)) std::printf("  %s\n", line.c_str());
  std::ifstream hf(dir / "hashes.txt");
  std::printf("artifact hashes, recomputed vs stored:\n");
  bool all_ok = true;
  std::string name, stored;
  while (hf >> name >> stored) {
    std::uint64_t now = io::hash_file(dir / name);
    bool ok = std::to_string(now) == stored;
    all_ok = all_ok && ok;
    std::printf("  %-16s %s %s\n", name.c_str(), stored.c_str(),
                ok ? "ok" : ("MISMATCH (now " + std::to_string(now) + ")").c_str());
  }
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cgolab: Carleman/CGO estimate checks and DN-to-potential "
               "reconstruction on the cylinder"};
  app.require_subcommand(1);
  GlobalOpts g;
  app.add_option("--config", g.config, "config file (plain-text sections)")
      ->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "output directory");
  app.add_option("--threads", g.threads, "worker threads for parallel stages");
  app.add_option("--seed", g.seed, "RNG seed for randomized checks");

  app.add_subcommand("verify-carleman",
                     "measure the conjugated-operator and cluster ratios")
      ->fallthrough();
  app.add_subcommand("verify-xray",
                     "Santalo, adjoint and round-trip checks on the disk")
      ->fallthrough();
  app.add_subcommand("build-cgo",
                     "build CGO solutions over a tau sweep, record remainders")
      ->fallthrough();
  app.add_subcommand("dn-map", "assemble the DN matrices for the config")
      ->fallthrough();
  app.add_subcommand("reconstruct", "run the full DN-to-potential pipeline")
      ->fallthrough();
  app.add_subcommand("report", "verify and print a stored reconstruction report")
      ->fallthrough();

  CLI11_PARSE(app, argc, argv);
  try {
    const std::string sub = app.get_subcommands().front()->get_name();
    if (sub == "verify-carleman") return cmd_verify_carleman(g);
    if (sub == "verify-xray") return cmd_verify_xray(g);
    if (sub == "build-cgo") return cmd_build_cgo(g);
    if (sub == "dn-map") return cmd_dn_map(g);
    if (sub == "reconstruct") return cmd_reconstruct(g);
    if (sub == "report") return cmd_report(g);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
