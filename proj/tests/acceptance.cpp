// Acceptance run: evaluates every primary criterion at its stated tolerance and
// prints one PASS/FAIL line per criterion. Exit status is nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "helfrich/harness.hpp"
#include "helfrich/joint_generator.hpp"
#include "helfrich/poisson_spectral.hpp"
#include "helfrich/rough_lift.hpp"
#include "oracles.hpp"

using namespace helfrich;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

struct Context {
  fs::path out;
  int workers = 1;
  std::ofstream log;
};

ExperimentConfig base_config(const Context& ctx, const std::string& sub) {
  ExperimentConfig c;
  c.model.cutoff = 1;
  c.output.dir = (ctx.out / sub).string();
  c.workers = ctx.workers;
  return c;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

Mat2 mat(const json& j) {
  Mat2 m;
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 2; ++k) m(i, k) = j.at(i).at(k).get<double>();
  return m;
}

double max_abs(const Mat2& m) { return m.cwiseAbs().maxCoeff(); }

// Regime (1,1) spectral reference at cutoff 1, cached under <out>/hom11/cache.
HomogenizedQuantities hom11_reference(Context& ctx) {
  bool hit = false;
  const ExperimentConfig c = base_config(ctx, "hom11");
  fs::create_directories(c.output.dir);
  return spectral_reference(c, hit, ctx.log);
}

// ---------------------------------------------------------------------------

std::vector<PathSample> lift_sample_paths() {
  std::vector<PathSample> paths;
  struct Case {
    int cutoff;
    ScalingRegime regime;
    double eps;
  };
  const Case cases[] = {{0, ScalingRegime::hom11(), 0.5},
                        {1, ScalingRegime::averaging(), 0.5},
                        {1, ScalingRegime::hom12(), 0.5},
                        {1, ScalingRegime::hom11(), 0.5},
                        {1, ScalingRegime::hom11(), 0.25},
                        {2, ScalingRegime::hom11(), 0.5}};
  for (const Case& k : cases) {
    const Membrane m(ModelParams{1, 1, k.cutoff});
    SimConfig c;
    c.regime = k.regime;
    c.epsilon = k.eps;
    c.dt = k.cutoff == 0 ? 1e-3 : dt_max(k.regime, k.eps, 1.0);
    c.master_seed = 101;
    const PathSimulator sim(m, c);
    for (std::uint64_t r = 0; r < 2; ++r) paths.push_back(sim.simulate(r));
  }
  return paths;
}

Outcome chen_relation(Context&) {
  RandomStream rng(102, 0, kStreamAux);
  double worst = 0.0;
  int lifts = 0;
  for (const PathSample& p : lift_sample_paths()) {
    const auto pairs = dyadic_pairs(p.n_steps());
    for (Flavor f : {Flavor::Ito, Flavor::Stratonovich}) {
      const RoughPathLift lift(p, f, pairs);
      ++lifts;
      for (int k = 0; k < 200; ++k) {
        long a[3];
        for (long& x : a) x = static_cast<long>(rng.uniform() * (p.n_steps() + 1));
        std::sort(a, a + 3);
        worst = std::max(worst, chen_relative_defect(lift, a[0], a[1], a[2]));
      }
    }
  }
  return {worst <= 1e-10, std::to_string(lifts) + " lifts x 200 triples, max relative defect " + num(worst)};
}

Outcome flavor_gap(Context&) {
  double gap_err = 0.0, anti_err = 0.0;
  long n = 0;
  for (const PathSample& p : lift_sample_paths()) {
    const auto pairs = dyadic_pairs(p.n_steps());
    const RoughPathLift ito = ito_lift(p, pairs), str = strato_lift(p, pairs);
    for (size_t i = 0; i < pairs.size(); ++i, ++n) {
      Mat2 br = Mat2::Zero();
      for (long u = pairs[i].s; u < pairs[i].t; ++u) {
        const Vec2 d = p.x[u + 1] - p.x[u];
        br += 0.5 * d * d.transpose();
      }
      const Mat2& a = ito.second_level()[i];
      const Mat2& b = str.second_level()[i];
      gap_err = std::max(gap_err, max_abs(b - a - br));
      anti_err = std::max(anti_err, max_abs((b - b.transpose()) - (a - a.transpose())));
    }
  }
  return {gap_err <= 1e-12 && anti_err <= 1e-12, std::to_string(n) + " pairs, max |gap - bracket/2| " + num(gap_err) +
                                                     ", max antisymmetric difference " + num(anti_err)};
}

Outcome flat_collapse(Context& ctx) {
  ExperimentConfig c = base_config(ctx, "flat");
  c.model.cutoff = 0;
  c.epsilons = {0.5, 0.25, 0.125};
  c.sim.n_paths = 10000;
  c.sim.dt = 1e-3;
  c.sim.horizon = 1.0;
  c.holder_gamma = 0.4;
  c.validate();
  cmd_table(c, ctx.log);
  const json j = read_json(fs::path(c.output.dir) / "table.json");
  bool ok = true;
  std::string d;
  double prev_h = 0, prev_se = 0;
  for (size_t i = 0; i < j["rows"].size(); ++i) {
    const json& r = j["rows"][i];
    const Mat2 D = mat(r["D"]), Dse = mat(r["D_se"]), A = mat(r["A_ito"]), Ase = mat(r["A_ito_se"]);
    const double zD = ((D - Mat2::Identity()).cwiseAbs().array() / Dse.array()).maxCoeff();
    const double zA = (A.cwiseAbs().array() / Ase.array()).maxCoeff();
    const double h = r["holder_p4"].get<double>(), hse = r["holder_p4_se"].get<double>();
    ok = ok && zD <= 3 && zA <= 3 && std::isfinite(h) && std::isfinite(hse);
    if (i > 0) ok = ok && std::abs(h - prev_h) <= 3 * std::hypot(hse, prev_se);
    prev_h = h;
    prev_se = hse;
    d += "eps=" + num(r["epsilon"].get<double>()) + " zD=" + num(zD) + " zA=" + num(zA) + " p4=" + num(h) + "+-" +
         num(hse) + "; ";
  }
  return {ok, d};
}

Outcome membrane_oracles(Context&) {
  const Membrane m(ModelParams{1, 1, 1});
  RandomStream r(103, 0, kStreamAux);
  double drift_err = 0.0, grad_err = 0.0, sigma_err = 0.0, growth = 0.0;
  const double h = 1e-5;
  for (int t = 0; t < 1000; ++t) {
    const SurfaceState eta = test::stationary_eta(m, r);
    const Vec2 x = test::random_point(r);
    const Vec2 F = m.drift_F(x, eta);
    drift_err = std::max(drift_err, (F - test::drift_oracle(m, x, eta, 1e-4)).norm() / F.norm());
    const Vec2 g = m.grad_height(x, eta);
    for (int k = 0; k < 2; ++k) {
      Vec2 e = Vec2::Zero();
      e[k] = h;
      grad_err = std::max(grad_err, std::abs(g[k] - (m.height(x + e, eta) - m.height(x - e, eta)) / (2 * h)));
    }
    const Mat2 G = Mat2::Identity() + g * g.transpose();
    sigma_err = std::max(sigma_err, max_abs(m.sigma(x, eta) * G - Mat2::Identity()));
  }
  const double C = m.drift_growth_bound();
  bool bounded = true;
  for (int t = 0; t < 10000; ++t) {
    const SurfaceState eta = test::stationary_eta(m, r);
    const Vec2 x = test::random_point(r);
    const double ratio = m.drift_F(x, eta).norm() / (1 + eta.norm());
    growth = std::max(growth, ratio);
    bounded = bounded && ratio <= C;
  }
  return {drift_err <= 1e-6 && grad_err <= 1e-6 && sigma_err <= 1e-14 && bounded,
          "F relative " + num(drift_err) + ", grad h " + num(grad_err) + ", Sigma(I+pp^T)-I " + num(sigma_err) +
              ", max |F|/(1+|eta|) " + num(growth) + " vs C " + num(C)};
}

Outcome rho_y(Context&) {
  const Membrane m(ModelParams{1, 1, 1});
  RandomStream r(104, 0, kStreamAux);
  const FourierGrid grid(6);
  double worst_L = 0.0, worst_F = 0.0;
  for (int rep = 0; rep < 3; ++rep) {
    const SurfaceState eta = test::stationary_eta(m, r);
    const InvariantDensity rho = rho_Y_density(m, eta, grid);
    const int n = 64;
    std::vector<double> w(n * n);
    std::vector<Vec2> pts(n * n);
    Vec2 meanF = Vec2::Zero();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const int p = i * n + j;
        pts[p] = Vec2(double(i) / n, double(j) / n);
        w[p] = std::sqrt(m.det_g(pts[p], eta)) / rho.normalization / (n * n);
        meanF += w[p] * m.drift_F(pts[p], eta);
      }
    worst_F = std::max(worst_F, meanF.cwiseAbs().maxCoeff());
    for (int k = 0; k < 20; ++k) {
      const test::TrigPoly f = test::TrigPoly::random(r, 1 + k % 3);
      double s = 0.0;
      for (size_t p = 0; p < pts.size(); ++p) s += w[p] * test::L0_oracle(m, eta, f, pts[p]);
      worst_L = std::max(worst_L, std::abs(s));
    }
  }
  return {worst_L <= 1e-8 && worst_F <= 1e-10,
          "max |<L0 f>| over 3 eta x 20 f " + num(worst_L) + ", max |<F>| " + num(worst_F)};
}

Outcome cell_residuals(Context& ctx) {
  const Membrane m(ModelParams{1, 1, 1});
  RandomStream r(105, 0, kStreamAux);
  double fixed_res = 0.0;
  SurfaceState probe_eta;
  PoissonSolution probe_sol;
  for (int k = 0; k < 5; ++k) {
    const SurfaceState eta = test::stationary_eta(m, r);
    const PoissonSolution sol = solve_chi_fixed_eta(m, eta);
    fixed_res = std::max(fixed_res, nodal_residual(m, eta, sol));
    if (k == 0) {
      probe_eta = eta;
      probe_sol = sol;
    }
  }
  ResolventOptions o;
  o.n_paths = 10000;
  o.workers = ctx.workers;
  double zmax = 0.0;
  for (int p = 0; p < 5; ++p) {
    o.seed = 200 + p;
    const Vec2 y = test::random_point(r);
    const ResolventEstimate e = mc_resolvent_fixed_eta(m, probe_eta, y, o);
    const Vec2 c = chi_value(probe_sol, y);
    for (int i = 0; i < 2; ++i) zmax = std::max(zmax, std::abs(e.value[i] - c[i]) / e.se[i]);
  }
  const HermiteFourierBasis b(m, 6, 4);
  const InvariantDensity rho = solve_invariant_density(b);
  const PoissonSolution chi = solve_chi_12(b, rho);
  const bool joint_ok = chi.converged && chi.solver_residual <= 1e-6;
  std::string d = "fixed-eta residual " + num(fixed_res) + ", resolvent max z " + num(zmax) +
                  " at 5 probes, joint (6,4) residual " + num(chi.solver_residual) + " status " + chi.status;
  if (!joint_ok)
    for (const auto& t : chi.trace) d += "\n    trace: " + t;
  return {fixed_res <= 1e-8 && zmax <= 3.0 && joint_ok, d};
}

Outcome strato_area(Context& ctx) {
  const HomogenizedQuantities q = hom11_reference(ctx);
  const double spec = std::max(max_abs(q.A_strato), max_abs(q.A_strato_alt));
  ExperimentConfig c = base_config(ctx, "hom11");
  c.epsilons = {0.125};
  c.sim.n_paths = 20000;
  c.validate();
  cmd_compare(c, ctx.log);
  const json row = read_json(fs::path(c.output.dir) / "compare.json")["rows"][0];
  const Mat2 A = mat(row["A_strato"]), se = mat(row["A_strato_se"]);
  const double z = (A.cwiseAbs().array() / se.array()).maxCoeff();
  return {spec <= 1e-6 && z <= 3.0, "spectral max |A~| (both forms) " + num(spec) + ", Monte-Carlo eps=0.125 max |A~|/se " +
                                        num(z) + " (|A~| " + num(max_abs(A)) + ")"};
}

Outcome limit_drift(Context& ctx) {
  const HomogenizedQuantities q = hom11_reference(ctx);
  if (!q.L) return {false, "L not computed"};
  const double l = q.L->cwiseAbs().maxCoeff();
  return {l <= 1e-5, "max |L| " + num(l)};
}

Outcome centering(Context& ctx) {
  ExperimentConfig c = base_config(ctx, "hom12");
  c.regime = ScalingRegime::hom12();
  fs::create_directories(c.output.dir);
  bool hit = false;
  const HomogenizedQuantities q = spectral_reference(c, hit, ctx.log);
  return {q.rho_centering <= 1e-6 && q.rho_marginal <= 1e-8,
          "(M,d)=(" + std::to_string(q.fourier_modes) + "," + std::to_string(q.hermite_degree) + ") max |<F>_rho| " +
              num(q.rho_centering) + ", eta-marginal defect " + num(q.rho_marginal)};
}

Outcome trend(Context& ctx) {
  hom11_reference(ctx);
  std::string d;
  bool ok = true;
  {
    ExperimentConfig c = base_config(ctx, "hom11");
    c.epsilons = {0.5, 0.25, 0.125};
    c.sim.n_paths = 10000;
    c.validate();
    cmd_table(c, ctx.log);
    const json j = read_json(fs::path(c.output.dir) / "table.json");
    const Mat2 Dref = mat(j["reference"]["D"]);
    double pm = 0, ps = 0;
    d += "hom11 |D^-D|:";
    for (size_t i = 0; i < j["rows"].size(); ++i) {
      const json& r = j["rows"][i];
      const double e = r["D_error"].get<double>(), s = r["D_error_se"].get<double>();
      if (i > 0 && e - s > pm + ps) ok = false;
      pm = e;
      ps = s;
      d += " " + num(e) + "+-" + num(s);
    }
    const double rel = pm / Dref.norm();
    ok = ok && rel <= 0.2;
    d += ", relative at eps=0.125 " + num(rel);
  }
  {
    ExperimentConfig c = base_config(ctx, "hom12");
    c.regime = ScalingRegime::hom12();
    c.epsilons = {0.5, 0.25, 0.125};
    c.sim.n_paths = 10000;
    c.validate();
    cmd_table(c, ctx.log);
    const json j = read_json(fs::path(c.output.dir) / "table.json");
    const Mat2 Aref = mat(j["reference"]["A_ito"]);
    d += "; hom12 |A^-A|:";
    double z = 0;
    for (const json& r : j["rows"]) {
      const Mat2 A = mat(r["A_ito"]), se = mat(r["A_ito_se"]);
      d += " " + num(max_abs(A - Aref));
      z = ((A - Aref).cwiseAbs().array() / se.array()).maxCoeff();
    }
    ok = ok && z <= 3.0;
    d += ", max z at eps=0.125 " + num(z);
  }
  return {ok, d};
}

bool same_tree(const fs::path& a, const fs::path& b, std::string& detail, int& n_files) {
  std::vector<fs::path> fa;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
  std::sort(fa.begin(), fa.end());
  long nb = 0;
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) ++nb;
  if (static_cast<long>(fa.size()) != nb) {
    detail = "file sets differ";
    return false;
  }
  for (const auto& rel : fa) {
    std::ifstream x(a / rel, std::ios::binary), y(b / rel, std::ios::binary);
    std::ostringstream sx, sy;
    sx << x.rdbuf();
    sy << y.rdbuf();
    if (sx.str() != sy.str()) {
      detail = rel.string() + " differs";
      return false;
    }
    ++n_files;
  }
  return true;
}

Outcome determinism(Context& ctx) {
  const int many = std::max(2, ctx.workers);
  const fs::path cache = ctx.out / "hom11" / "cache";
  hom11_reference(ctx);
  auto run = [&](const std::string& sub, int workers) {
    const fs::path root = ctx.out / sub;
    fs::remove_all(root);
    fs::create_directories(root / "hom11");
    fs::copy(cache, root / "hom11" / "cache", fs::copy_options::recursive);

    ExperimentConfig f = base_config(ctx, "");
    f.model.cutoff = 0;
    f.epsilons = {0.5, 0.25};
    f.sim.n_paths = 2000;
    f.sim.dt = 1e-3;
    f.workers = workers;
    f.output.dir = (root / "flat").string();
    cmd_table(f, ctx.log);

    ExperimentConfig h = base_config(ctx, "");
    h.epsilons = {0.5};
    h.sim.n_paths = 1000;
    h.workers = workers;
    h.output.dir = (root / "hom11").string();
    cmd_table(h, ctx.log);
    cmd_solve(h, ctx.log);

    ExperimentConfig s = base_config(ctx, "");
    s.regime = ScalingRegime::hom12();
    s.spectral.fourier_modes = 4;
    s.spectral.hermite_degree = 2;
    s.epsilons = {0.5};
    s.sim.n_paths = 200;
    s.output.binary_paths = true;
    s.workers = workers;
    s.output.dir = (root / "hom12").string();
    cmd_simulate(s, ctx.log);
    cmd_compare(s, ctx.log);
  };
  run("determinism_w1", 1);
  run("determinism_wN", many);
  std::string detail;
  int n = 0;
  const bool ok = same_tree(ctx.out / "determinism_w1", ctx.out / "determinism_wN", detail, n);
  return {ok, ok ? std::to_string(n) + " files byte-identical for workers 1 vs " + std::to_string(many) : detail};
}

struct Criterion {
  const char* name;
  std::function<Outcome(Context&)> run;
  double budget_s;  // 0: no runtime bound
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Primary acceptance criteria"};
  Context ctx;
  std::string out = "acceptance_out";
  std::string only;
  ctx.workers = std::max(1u, std::thread::hardware_concurrency());
  app.add_option("--out", out, "scratch and artifact directory");
  app.add_option("--workers", ctx.workers, "worker threads");
  app.add_option("--only", only, "run only criteria whose name contains this string");
  CLI11_PARSE(app, argc, argv);
  ctx.out = out;
  fs::create_directories(ctx.out);
  ctx.log.open(ctx.out / "acceptance.log");

  const std::vector<Criterion> criteria = {
      {"chen_relation", chen_relation, 0},
      {"flavor_gap", flavor_gap, 0},
      {"flat_collapse", flat_collapse, 60},
      {"membrane_oracles", membrane_oracles, 0},
      {"rho_Y_invariance", rho_y, 0},
      {"cell_residuals", cell_residuals, 600},
      {"vanishing_strato_area", strato_area, 900},
      {"vanishing_limit_drift", limit_drift, 0},
      {"centering_under_rho", centering, 0},
      {"convergence_trend", trend, 2700},
      {"determinism", determinism, 0},
  };

  int failed = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && std::string(c.name).find(only) == std::string::npos) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0 && secs > c.budget_s) {
      o.pass = false;
      o.detail += "; runtime above " + num(c.budget_s) + " s";
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS " : "FAIL ") << c.name << " (" << num(secs) << " s): " << o.detail << std::endl;
  }
  std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criteria failed" : std::string("acceptance: all criteria passed"))
            << std::endl;
  return failed ? 1 : 0;
}
