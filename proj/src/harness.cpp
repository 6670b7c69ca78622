#include "helfrich/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "helfrich/joint_generator.hpp"
#include "helfrich/rough_lift.hpp"
#include "helfrich/util.hpp"

namespace helfrich {

namespace fs = std::filesystem;
using nlohmann::json;

int CommandResult::exit_code() const {
  for (const auto& c : checks)
    if (c.outcome == "fail") return kExitCheckFailed;
  return kExitOk;
}

namespace {

json mat_json(const Mat2& m) { return json::array({{m(0, 0), m(0, 1)}, {m(1, 0), m(1, 1)}}); }

Mat2 mat_from(const json& j) {
  Mat2 m;
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 2; ++k) m(i, k) = j.at(i).at(k).get<double>();
  return m;
}

// NaN and infinities have no JSON literal; they are written as null.
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double num_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

std::string eps_tag(double e) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", e);
  return buf;
}

std::string artifact_comment(const ExperimentConfig& cfg) {
  return std::string("# ") + kArtifactVersion + " config_hash=" + hex64(cfg.hash()) + "\n";
}

json envelope(const ExperimentConfig& cfg, const char* command) {
  json j;
  j["schema_version"] = kJsonSchemaVersion;
  j["version"] = kArtifactVersion;
  j["command"] = command;
  j["config_hash"] = hex64(cfg.hash());
  j["regime"] = cfg.regime.name();
  j["model"] = {{"kappa_star", cfg.model.kappa_star}, {"sigma_star", cfg.model.sigma_star}, {"cutoff", cfg.model.cutoff}};
  return j;
}

void write_text(const fs::path& p, const std::string& text, CommandResult& res) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << text;
  if (!os) throw std::runtime_error("write failed for " + p.string());
  res.files.push_back(p.string());
}

fs::path out_dir(const ExperimentConfig& cfg) {
  fs::path d(cfg.output.dir);
  fs::create_directories(d);
  return d;
}

std::vector<double> descending(std::vector<double> e) {
  std::sort(e.begin(), e.end(), std::greater<>());
  return e;
}

SpectralOptions spectral_options(const ExperimentConfig& cfg) {
  SpectralOptions o;
  o.fourier_modes = cfg.spectral.fourier_modes;
  o.hermite_degree = cfg.spectral.hermite_degree;
  o.eta_order = cfg.spectral.eta_order;
  o.tol = cfg.spectral.tol;
  o.workers = cfg.workers;
  return o;
}

// Stationary start law for regime (1,2) from the Galerkin density; other regimes use
// the simulator's built-in rho_Y start.
std::optional<StartDensity> start_law(const ExperimentConfig& cfg, const Membrane& membrane) {
  if (!(cfg.regime == ScalingRegime::hom12()) || membrane.dim() == 0 || cfg.sim.x0) return std::nullopt;
  const HermiteFourierBasis basis(membrane, cfg.spectral.fourier_modes, cfg.spectral.hermite_degree);
  JointSolveOptions jo;
  jo.tol = cfg.spectral.tol;
  jo.workers = cfg.workers;
  return make_start_density(basis, solve_invariant_density(basis, jo));
}

CheckResult make_check(Check c, bool pass, const std::string& detail) {
  return {c, pass ? "pass" : "fail", detail};
}

CheckResult skipped(Check c, const std::string& why) { return {c, "skipped", why}; }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

// max_ij |est - ref| / se, with se = 0 treated as infinite disagreement unless equal.
double max_z(const Mat2& est, const Mat2& ref, const Mat2& se) {
  double z = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 2; ++k) {
      const double d = std::abs(est(i, k) - ref(i, k));
      z = std::max(z, se(i, k) > 0.0 ? d / se(i, k) : (d > 0.0 ? std::numeric_limits<double>::infinity() : 0.0));
    }
  return z;
}

void log_checks(const std::vector<CheckResult>& checks, std::ostream& log) {
  for (const auto& c : checks) log << "check " << check_name(c.check) << ": " << c.outcome << " (" << c.detail << ")\n";
}

json checks_json(const std::vector<CheckResult>& checks) {
  json a = json::array();
  for (const auto& c : checks) a.push_back(to_json(c));
  return a;
}

std::vector<CheckResult> only_enabled(const ExperimentConfig& cfg, std::vector<CheckResult> v) {
  std::vector<CheckResult> out;
  for (auto& c : v)
    if (cfg.enabled(c.check)) out.push_back(std::move(c));
  return out;
}

json row_json(const ConvergenceRow& r) {
  json j;
  j["epsilon"] = r.epsilon;
  j["n_paths"] = r.n_paths;
  j["D"] = mat_json(r.D.value);
  j["D_se"] = mat_json(r.D.se);
  j["A_ito"] = mat_json(r.A_ito.value);
  j["A_ito_se"] = mat_json(r.A_ito.se);
  j["A_strato"] = mat_json(r.A_strato.value);
  j["A_strato_se"] = mat_json(r.A_strato.se);
  j["z_D"] = num(max_z(r.D.value, r.ref_D, r.D.se));
  j["z_A_ito"] = num(max_z(r.A_ito.value, r.ref_A_ito, r.A_ito.se));
  j["z_A_strato"] = num(max_z(r.A_strato.value, r.ref_A_strato, r.A_strato.se));
  const MeanSE e = d_error(r);
  j["D_error"] = num(e.mean);
  j["D_error_se"] = num(e.se);
  j["holder_p4"] = num(r.holder_p4.mean);
  j["holder_p4_se"] = num(r.holder_p4.se);
  j["wall_s"] = num(r.wall_s);
  return j;
}

struct Comparison {
  HomogenizedQuantities ref;
  std::vector<ConvergenceRow> rows;
};

Comparison run_comparison(const ExperimentConfig& cfg, std::ostream& log) {
  Comparison c;
  bool hit = false;
  c.ref = spectral_reference(cfg, hit, log);
  const Membrane membrane(cfg.model);
  TableConfig tc;
  tc.regime = cfg.regime;
  tc.epsilons = cfg.epsilons;
  tc.horizon = cfg.sim.horizon;
  tc.dt = cfg.sim.dt;
  tc.n_paths = cfg.sim.n_paths;
  tc.seed = cfg.seed;
  tc.workers = cfg.workers;
  tc.holder_gamma = cfg.holder_gamma;
  tc.timing = cfg.output.timing;
  if (cfg.sim.x0) throw std::invalid_argument("sim.x0 must be 'stationary' for compare and table runs");
  c.rows = convergence_table(membrane, tc, c.ref, start_law(cfg, membrane));
  return c;
}

}  // namespace

json to_json(const HomogenizedQuantities& q) {
  json j;
  j["regime"] = q.regime.name();
  j["source"] = source_name(q.source);
  j["D"] = mat_json(q.D);
  j["L"] = q.L ? json::array({(*q.L)[0], (*q.L)[1]}) : json(nullptr);
  j["A_ito"] = mat_json(q.A_ito);
  j["A_strato"] = mat_json(q.A_strato);
  j["D_bracket"] = mat_json(q.D_bracket);
  j["A_strato_alt"] = mat_json(q.A_strato_alt);
  j["A_strato_pointwise"] = q.A_strato_pointwise;
  j["A_form_defect"] = q.A_form_defect;
  j["eta_quadrature_change"] = q.eta_quadrature_change;
  j["solver_residual"] = q.solver_residual;
  j["centering_residual"] = q.centering_residual;
  j["truncation_residual"] = q.truncation_residual;
  j["rho_centering"] = q.rho_centering;
  j["rho_marginal"] = q.rho_marginal;
  j["fourier_modes"] = q.fourier_modes;
  j["hermite_degree"] = q.hermite_degree;
  j["eta_order"] = q.eta_order;
  j["status"] = q.status;
  return j;
}

HomogenizedQuantities quantities_from_json(const json& j) {
  HomogenizedQuantities q;
  q.regime = ScalingRegime::parse(j.at("regime").get<std::string>());
  q.source = j.at("source").get<std::string>() == source_name(QuantitySource::MonteCarlo) ? QuantitySource::MonteCarlo
                                                                                          : QuantitySource::Spectral;
  q.D = mat_from(j.at("D"));
  if (!j.at("L").is_null()) q.L = Vec2(j.at("L").at(0).get<double>(), j.at("L").at(1).get<double>());
  q.A_ito = mat_from(j.at("A_ito"));
  q.A_strato = mat_from(j.at("A_strato"));
  q.D_bracket = mat_from(j.at("D_bracket"));
  q.A_strato_alt = mat_from(j.at("A_strato_alt"));
  q.A_strato_pointwise = num_from(j.at("A_strato_pointwise"));
  q.A_form_defect = num_from(j.at("A_form_defect"));
  q.eta_quadrature_change = num_from(j.at("eta_quadrature_change"));
  q.solver_residual = num_from(j.at("solver_residual"));
  q.centering_residual = num_from(j.at("centering_residual"));
  q.truncation_residual = num_from(j.at("truncation_residual"));
  q.rho_centering = num_from(j.at("rho_centering"));
  q.rho_marginal = num_from(j.at("rho_marginal"));
  q.fourier_modes = j.at("fourier_modes").get<int>();
  q.hermite_degree = j.at("hermite_degree").get<int>();
  q.eta_order = j.at("eta_order").get<int>();
  q.status = j.at("status").get<std::string>();
  return q;
}

json to_json(const CheckResult& c) {
  return {{"check", check_name(c.check)}, {"outcome", c.outcome}, {"detail", c.detail}};
}

std::uint64_t spectral_cache_key(const ExperimentConfig& cfg) {
  std::ostringstream s;
  s << kArtifactVersion << '\n'
    << "model " << fmt_double(cfg.model.kappa_star) << ' ' << fmt_double(cfg.model.sigma_star) << ' '
    << cfg.model.cutoff << '\n'
    << "regime " << cfg.regime.name() << '\n'
    << "spectral " << cfg.spectral.fourier_modes << ' ' << cfg.spectral.hermite_degree << ' '
    << cfg.spectral.eta_order << ' ' << fmt_double(cfg.spectral.tol) << '\n';
  return fnv1a(s.str());
}

HomogenizedQuantities spectral_reference(const ExperimentConfig& cfg, bool& cache_hit, std::ostream& log) {
  const fs::path dir = fs::path(cfg.output.dir) / "cache";
  const fs::path file = dir / (hex64(spectral_cache_key(cfg)) + ".json");
  cache_hit = false;
  if (fs::exists(file)) {
    std::ifstream in(file);
    try {
      const json j = json::parse(in);
      if (j.at("schema_version").get<int>() == kJsonSchemaVersion) {
        cache_hit = true;
        log << "cache hit: " << file.string() << '\n';
        return quantities_from_json(j.at("quantities"));
      }
    } catch (const std::exception& e) {
      log << "ignoring unreadable cache entry " << file.string() << ": " << e.what() << '\n';
    }
  }
  const Membrane membrane(cfg.model);
  const SpectralBundle b = spectral_quantities(membrane, cfg.regime, spectral_options(cfg));
  fs::create_directories(dir);
  json j;
  j["schema_version"] = kJsonSchemaVersion;
  j["cache_key"] = hex64(spectral_cache_key(cfg));
  j["quantities"] = to_json(b.q);
  std::ofstream os(file, std::ios::binary);
  os << j.dump(2) << '\n';
  return b.q;
}

std::vector<CheckResult> spectral_checks(const ExperimentConfig& cfg, const HomogenizedQuantities& q) {
  std::vector<CheckResult> out;
  const bool h11 = cfg.regime == ScalingRegime::hom11(), h12 = cfg.regime == ScalingRegime::hom12();

  if (cfg.regime == ScalingRegime::averaging())
    out.push_back(make_check(Check::Residual, q.status == "ok", "quadrature average, status " + q.status));
  else if (h11)
    out.push_back(make_check(Check::Residual, q.status == "ok",
                             "max cell residual " + fmt(q.solver_residual) + ", eta quadrature change " +
                                 fmt(q.eta_quadrature_change) + ", status " + q.status));
  else
    out.push_back(make_check(Check::Residual, q.status == "ok" && q.solver_residual <= cfg.spectral.tol,
                             "joint residual " + fmt(q.solver_residual) + " vs tol " + fmt(cfg.spectral.tol) +
                                 ", status " + q.status));

  if (h11) {
    const double a = std::max({q.A_strato.cwiseAbs().maxCoeff(), q.A_strato_alt.cwiseAbs().maxCoeff(),
                               q.A_strato_pointwise, q.A_form_defect});
    out.push_back(make_check(Check::AreaVanish, a <= cfg.checks.area_tol,
                             "max |A~| over evaluation forms " + fmt(a) + " vs tol " + fmt(cfg.checks.area_tol)));
  } else {
    out.push_back(skipped(Check::AreaVanish, "area correction vanishes only in regime hom11"));
  }

  if (h11 && q.L) {
    const double l = q.L->cwiseAbs().maxCoeff();
    out.push_back(make_check(Check::DriftVanish, l <= cfg.checks.drift_tol,
                             "max |L| " + fmt(l) + " vs tol " + fmt(cfg.checks.drift_tol)));
  } else {
    out.push_back(skipped(Check::DriftVanish, "limit drift is checked in regime hom11"));
  }

  if (h12)
    out.push_back(make_check(Check::Centering,
                             q.rho_centering <= cfg.checks.centering_tol && q.rho_marginal <= cfg.checks.marginal_tol,
                             "max |<F>_rho| " + fmt(q.rho_centering) + ", eta-marginal defect " + fmt(q.rho_marginal)));
  else
    out.push_back(skipped(Check::Centering, "Galerkin density exists in regime hom12"));
  return out;
}

std::vector<CheckResult> table_checks(const ExperimentConfig& cfg, const std::vector<ConvergenceRow>& rows) {
  std::vector<CheckResult> out;
  if (rows.empty()) throw std::invalid_argument("empty convergence table");
  const ConvergenceRow& last = rows.back();
  const double k = cfg.checks.n_se;
  const bool flat = cfg.model.cutoff == 0;

  if (flat) {
    out.push_back(skipped(Check::Trend, "flat membrane: covered by the flat check"));
  } else if (cfg.regime == ScalingRegime::hom12()) {
    const double z = max_z(last.A_ito.value, last.ref_A_ito, last.A_ito.se);
    out.push_back(make_check(Check::Trend, z <= k,
                             "Ito area at eps=" + eps_tag(last.epsilon) + ": max |A^-A|/se = " + fmt(z)));
  } else {
    bool monotone = true;
    std::string detail = "|D^-D| per eps:";
    for (size_t i = 0; i < rows.size(); ++i) {
      const MeanSE e = d_error(rows[i]);
      detail += " " + fmt(e.mean) + "+-" + fmt(e.se);
      if (i > 0) {
        const MeanSE p = d_error(rows[i - 1]);
        if (e.mean - e.se > p.mean + p.se) monotone = false;
      }
    }
    const double rel = d_error(last).mean / last.ref_D.norm();
    detail += "; relative at smallest eps " + fmt(rel);
    out.push_back(make_check(Check::Trend, monotone && rel <= cfg.checks.trend_rel, detail));
  }

  if (flat) {
    bool ok = true;
    std::string detail;
    for (const auto& r : rows) {
      const double zd = max_z(r.D.value, Mat2::Identity(), r.D.se), za = max_z(r.A_ito.value, Mat2::Zero(), r.A_ito.se);
      ok = ok && zd <= k && za <= k;
      detail += "eps=" + eps_tag(r.epsilon) + " zD=" + fmt(zd) + " zA=" + fmt(za) + "; ";
    }
    if (cfg.holder_gamma > 0.0) {
      for (size_t i = 0; i < rows.size(); ++i) {
        const MeanSE& h = rows[i].holder_p4;
        ok = ok && std::isfinite(h.mean) && std::isfinite(h.se);
        if (i > 0) {
          const MeanSE& p = rows[i - 1].holder_p4;
          ok = ok && std::abs(h.mean - p.mean) <= k * std::hypot(h.se, p.se);
        }
      }
      detail += "holder p4 finite and eps-stable";
    }
    out.push_back(make_check(Check::Flat, ok, detail));
  } else {
    out.push_back(skipped(Check::Flat, "cutoff > 0"));
  }

  if (cfg.regime == ScalingRegime::hom11()) {
    const double z = max_z(last.A_strato.value, Mat2::Zero(), last.A_strato.se);
    out.push_back(make_check(Check::StratoArea, z <= k,
                             "Monte-Carlo A~ at eps=" + eps_tag(last.epsilon) + ": max |A~|/se = " + fmt(z)));
  } else {
    out.push_back(skipped(Check::StratoArea, "checked in regime hom11"));
  }
  return out;
}

CommandResult cmd_simulate(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  CommandResult res;
  const fs::path dir = out_dir(cfg);
  const Membrane membrane(cfg.model);
  const std::optional<StartDensity> start = start_law(cfg, membrane);
  const std::string head = artifact_comment(cfg);
  std::ostringstream summary;
  summary << head << "epsilon,n_paths,dt,n_steps,D11,D12,D21,D22,D11_se,D12_se,D21_se,D22_se,"
          << "Aito11,Aito12,Aito21,Aito22,Astrato11,Astrato12,Astrato21,Astrato22,holder_p4,holder_p4_se\n";
  for (double eps : descending(cfg.epsilons)) {
    SimConfig sc = cfg.sim_config(eps);
    sc.master_seed = epsilon_seed(cfg.seed, eps);
    const std::string tag = eps_tag(eps);

    // Written replicas are re-simulated by id; they match the corresponding ensemble members.
    SimConfig wc = sc;
    wc.record_eta = cfg.output.binary_paths;
    const PathSimulator writer(membrane, wc, start);
    std::vector<PathSample> written;
    for (long r = 0; r < std::min(cfg.output.paths_written, sc.n_paths); ++r) written.push_back(writer.simulate(r));
    {
      std::ostringstream os;
      os << head;
      write_paths_csv(written, cfg.output.path_stride, os);
      write_text(dir / ("paths_eps" + tag + ".csv"), os.str(), res);
    }
    if (!written.empty()) {
      std::ostringstream os;
      os << head;
      const std::vector<GridPair> pairs = dyadic_pairs(written[0].n_steps());
      write_lift_csv(RoughPathLift(written[0], Flavor::Ito, pairs), os, true);
      write_lift_csv(RoughPathLift(written[0], Flavor::Stratonovich, pairs), os, false);
      write_text(dir / ("lift_eps" + tag + ".csv"), os.str(), res);
    }
    if (cfg.output.binary_paths)
      for (const auto& p : written) {
        std::ostringstream os;
        write_path_binary(p, cfg.hash(), os);
        write_text(dir / ("path_eps" + tag + "_r" + std::to_string(p.replica) + ".bin"), os.str(), res);
      }

    const PathSimulator sim(membrane, sc, start);
    const double gamma = cfg.holder_gamma;
    const std::vector<PathSummary> s =
        batch_map<PathSummary>(sim, [gamma](PathSample&& p) { return summarize_path(p, gamma); }, cfg.workers);
    const MatEstimate D = mc_estimate_D(s, sc.horizon);
    const MatEstimate Ai = mc_estimate_area(s, sc.horizon, Flavor::Ito, Vec2::Zero());
    const MatEstimate As = mc_estimate_area(s, sc.horizon, Flavor::Stratonovich, Vec2::Zero());
    MeanSE h4;
    if (gamma > 0.0) {
      std::vector<double> p4;
      for (const auto& x : s) p4.push_back(std::pow(x.holder_x, 4));
      h4 = mean_se(p4);
    }
    auto put = [&summary](const Mat2& m) {
      summary << ',' << fmt_double(m(0, 0)) << ',' << fmt_double(m(0, 1)) << ',' << fmt_double(m(1, 0)) << ','
              << fmt_double(m(1, 1));
    };
    summary << fmt_double(eps) << ',' << sc.n_paths << ',' << fmt_double(sc.dt) << ',' << sc.n_steps();
    put(D.value);
    put(D.se);
    put(Ai.value);
    put(As.value);
    summary << ',' << fmt_double(h4.mean) << ',' << fmt_double(h4.se) << '\n';
    log << "simulated eps=" << tag << " (" << sc.n_paths << " paths, " << sc.n_steps() << " steps)\n";
  }
  write_text(dir / "simulate_summary.csv", summary.str(), res);
  return res;
}

CommandResult cmd_solve(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  CommandResult res;
  const fs::path dir = out_dir(cfg);
  bool hit = false;
  const HomogenizedQuantities q = spectral_reference(cfg, hit, log);
  res.checks = only_enabled(cfg, spectral_checks(cfg, q));
  log_checks(res.checks, log);
  json j = envelope(cfg, "solve");
  j["spectral"] = {{"fourier_modes", cfg.spectral.fourier_modes},
                   {"hermite_degree", cfg.spectral.hermite_degree},
                   {"eta_order", cfg.spectral.eta_order},
                   {"tol", cfg.spectral.tol}};
  j["quantities"] = to_json(q);
  j["checks"] = checks_json(res.checks);
  j["status"] = q.status;
  write_text(dir / "solve.json", j.dump(2) + "\n", res);
  return res;
}

CommandResult cmd_compare(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  CommandResult res;
  const fs::path dir = out_dir(cfg);
  const Comparison c = run_comparison(cfg, log);
  std::vector<CheckResult> all = spectral_checks(cfg, c.ref);
  for (auto& t : table_checks(cfg, c.rows))
    if (t.check != Check::Trend) all.push_back(t);
  res.checks = only_enabled(cfg, all);
  log_checks(res.checks, log);
  json j = envelope(cfg, "compare");
  j["reference"] = to_json(c.ref);
  j["rows"] = json::array();
  for (const auto& r : c.rows) j["rows"].push_back(row_json(r));
  j["checks"] = checks_json(res.checks);
  std::ostringstream csv;
  csv << artifact_comment(cfg);
  write_table_csv(c.rows, csv);
  write_text(dir / "compare.csv", csv.str(), res);
  write_text(dir / "compare.json", j.dump(2) + "\n", res);
  return res;
}

CommandResult cmd_table(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  CommandResult res;
  const fs::path dir = out_dir(cfg);
  const Comparison c = run_comparison(cfg, log);
  std::vector<CheckResult> all = spectral_checks(cfg, c.ref);
  for (auto& t : table_checks(cfg, c.rows)) all.push_back(t);
  res.checks = only_enabled(cfg, all);
  log_checks(res.checks, log);
  std::ostringstream csv;
  csv << artifact_comment(cfg);
  write_table_csv(c.rows, csv);
  write_text(dir / "table.csv", csv.str(), res);
  json j = envelope(cfg, "table");
  j["reference"] = to_json(c.ref);
  j["rows"] = json::array();
  for (const auto& r : c.rows) j["rows"].push_back(row_json(r));
  j["checks"] = checks_json(res.checks);
  write_text(dir / "table.json", j.dump(2) + "\n", res);
  return res;
}

}  // namespace helfrich
