#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "helfrich/config.hpp"
#include "helfrich/harness.hpp"

using namespace helfrich;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "helfrich_harness_test" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig flat_config(const fs::path& out) {
  ExperimentConfig c;
  c.model.cutoff = 0;
  c.epsilons = {0.5};
  c.sim.dt = 1e-2;
  c.sim.n_paths = 400;
  c.output.dir = out.string();
  c.validate();
  return c;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("simulate artifacts are deterministic across runs and workers") {
    const fs::path d1 = scratch_dir("sim1"), d2 = scratch_dir("sim2");
    ExperimentConfig c = flat_config(d1);
    c.epsilons = {0.5, 0.25};
    c.output.binary_paths = true;
    std::ostringstream log;
    const CommandResult a = cmd_simulate(c, log);
    CHECK(a.exit_code() == kExitOk);
    c.output.dir = d2.string();
    c.workers = 3;
    const CommandResult b = cmd_simulate(c, log);
    REQUIRE(a.files.size() == b.files.size());
    CHECK(a.files.size() >= 5);
    for (size_t i = 0; i < a.files.size(); ++i) {
      const fs::path fa(a.files[i]), fb(b.files[i]);
      CHECK(fa.filename() == fb.filename());
      CHECK(slurp(fa) == slurp(fb));
    }
    const std::string summary = slurp(d1 / "simulate_summary.csv");
    CHECK(summary.rfind("# helfrich-rough ", 0) == 0);
    CHECK(summary.find("config_hash=") != std::string::npos);
  }

  TEST_CASE("cutoff=0 smoke run") {
    const fs::path d = scratch_dir("smoke");
    ExperimentConfig c = flat_config(d);
    c.sim.dt = 1e-3;
    c.sim.n_paths = 1000;
    const auto t0 = std::chrono::steady_clock::now();
    std::ostringstream log;
    const CommandResult r = cmd_table(c, log);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    MESSAGE("smoke run " << secs << " s");
    CHECK(secs < 10.0);
    CHECK(r.exit_code() == kExitOk);
  }

  TEST_CASE("solve on a flat membrane and the spectral cache") {
    const fs::path d = scratch_dir("solve");
    ExperimentConfig c = flat_config(d);
    std::ostringstream log1, log2;
    const CommandResult r = cmd_solve(c, log1);
    CHECK(r.exit_code() == kExitOk);
    const nlohmann::json j = read_json(d / "solve.json");
    CHECK(j["schema_version"] == kJsonSchemaVersion);
    CHECK(j["command"] == "solve");
    CHECK(j["quantities"]["D"] == nlohmann::json::array({{1.0, 0.0}, {0.0, 1.0}}));
    CHECK(j["quantities"].contains("solver_residual"));
    CHECK(j["status"] == "ok");
    CHECK(log1.str().find("cache hit") == std::string::npos);
    const std::string first = slurp(d / "solve.json");
    cmd_solve(c, log2);
    CHECK(log2.str().find("cache hit") != std::string::npos);
    CHECK(slurp(d / "solve.json") == first);
    // Round trip of the quantity block.
    const HomogenizedQuantities q = quantities_from_json(j["quantities"]);
    CHECK(to_json(q) == j["quantities"]);
    // Changing spectral settings changes the cache key; changing the seed does not.
    ExperimentConfig c2 = c;
    c2.seed = 99;
    CHECK(spectral_cache_key(c2) == spectral_cache_key(c));
    c2.spectral.eta_order = 6;
    CHECK(spectral_cache_key(c2) != spectral_cache_key(c));
  }

  TEST_CASE("three-epsilon table") {
    const fs::path d = scratch_dir("table");
    ExperimentConfig c = flat_config(d);
    c.epsilons = {0.125, 0.5, 0.25};
    std::ostringstream log;
    const CommandResult r = cmd_table(c, log);
    CHECK(r.exit_code() == kExitOk);
    const nlohmann::json j = read_json(d / "table.json");
    REQUIRE(j["rows"].size() == 3);
    CHECK(j["rows"][0]["epsilon"] == 0.5);
    CHECK(j["rows"][2]["epsilon"] == 0.125);
    std::istringstream csv(slurp(d / "table.csv"));
    std::string line;
    int data_rows = 0;
    while (std::getline(csv, line))
      if (!line.empty() && line[0] != '#' && line.rfind("epsilon", 0) != 0) ++data_rows;
    CHECK(data_rows == 3);
    bool saw_flat = false;
    for (const auto& chk : j["checks"]) {
      if (chk["check"] == "flat") saw_flat = true;
      CHECK(chk["outcome"] != "fail");
    }
    CHECK(saw_flat);
  }

  TEST_CASE("check selection and failing tolerances") {
    const fs::path d = scratch_dir("checks");
    ExperimentConfig c;
    c.model.cutoff = 1;
    c.spectral.eta_order = 2;
    c.output.dir = d.string();
    c.set("checks.enabled", "area_vanish");
    c.checks.area_tol = 1e-12;
    std::ostringstream log;
    const CommandResult ok = cmd_solve(c, log);
    CHECK(ok.exit_code() == kExitOk);
    c.checks.area_tol = 1e-30;
    const CommandResult bad = cmd_solve(c, log);
    CHECK(bad.exit_code() == kExitCheckFailed);
    c.set("checks.enabled", "none");
    const CommandResult none = cmd_solve(c, log);
    CHECK(none.exit_code() == kExitOk);
    CHECK(none.checks.empty());

    // Statistical checks fail the same way on an impossible band.
    ExperimentConfig f = flat_config(scratch_dir("checks_flat"));
    f.checks.n_se = 1e-9;
    CHECK(cmd_table(f, log).exit_code() == kExitCheckFailed);
    f.set("checks.enabled", "none");
    CHECK(cmd_table(f, log).exit_code() == kExitOk);
  }

  TEST_CASE("spectral checks on synthetic quantities") {
    ExperimentConfig c;
    HomogenizedQuantities q;
    q.regime = ScalingRegime::hom11();
    q.A_strato(0, 1) = 2e-15;
    q.L = Vec2(1e-7, 0.0);
    c.checks.area_tol = 1e-12;
    auto find = [](const std::vector<CheckResult>& v, Check k) {
      for (const auto& r : v)
        if (r.check == k) return r.outcome;
      return std::string("missing");
    };
    auto v = spectral_checks(c, q);
    CHECK(find(v, Check::AreaVanish) == "pass");
    CHECK(find(v, Check::DriftVanish) == "pass");
    CHECK(find(v, Check::Centering) == "skipped");
    c.checks.area_tol = 1e-15;
    v = spectral_checks(c, q);
    CHECK(find(v, Check::AreaVanish) == "fail");
    q.status = "failed: cell residual above tolerance";
    CHECK(find(spectral_checks(c, q), Check::Residual) == "fail");
    CommandResult r;
    r.checks = {{Check::Residual, "pass", ""}, {Check::Trend, "skipped", ""}};
    CHECK(r.exit_code() == kExitOk);
    r.checks.push_back({Check::Flat, "fail", ""});
    CHECK(r.exit_code() == kExitCheckFailed);
  }

  TEST_CASE("compare writes csv and json without the trend check") {
    const fs::path d = scratch_dir("compare");
    ExperimentConfig c = flat_config(d);
    std::ostringstream log;
    const CommandResult r = cmd_compare(c, log);
    CHECK(r.exit_code() == kExitOk);
    CHECK(fs::exists(d / "compare.csv"));
    const nlohmann::json j = read_json(d / "compare.json");
    CHECK(j["command"] == "compare");
    for (const auto& chk : j["checks"]) CHECK(chk["check"] != "trend");
  }
}
