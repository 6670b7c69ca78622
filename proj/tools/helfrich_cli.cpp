#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "helfrich/config.hpp"
#include "helfrich/harness.hpp"

extern char** environ;

int main(int argc, char** argv) {
  using namespace helfrich;
  CLI::App app{"Rough-path homogenization of diffusion on a fluctuating membrane"};
  app.require_subcommand(1, 1);

  std::optional<std::string> config_path;
  std::vector<std::pair<std::string, std::string>> flags;
  auto flag = [&flags](CLI::App* sub, const std::string& name, const std::string& key, const std::string& help) {
    sub->add_option_function<std::string>(name, [&flags, key](const std::string& v) { flags.emplace_back(key, v); },
                                           help);
  };

  std::vector<std::string> sets;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value config file");
    flag(sub, "--regime", "regime", "avg | hom12 | hom11");
    flag(sub, "--epsilon,--epsilons", "epsilons", "comma-separated epsilon list");
    flag(sub, "--paths", "sim.n_paths", "replicas per epsilon");
    flag(sub, "--dt", "sim.dt", "time step (0 selects the default)");
    flag(sub, "--horizon", "sim.horizon", "time horizon T");
    flag(sub, "--seed", "seed", "master seed");
    flag(sub, "--cutoff", "model.cutoff", "mode cutoff");
    flag(sub, "--fourier-modes", "spectral.fourier_modes", "Fourier order M");
    flag(sub, "--hermite-degree", "spectral.hermite_degree", "Hermite degree d");
    flag(sub, "--out", "output.dir", "output directory");
    flag(sub, "--workers", "workers", "worker threads");
    flag(sub, "--check", "checks.enabled", "all | none | comma-separated checks");
    sub->add_option("--set", sets, "additional key=value overrides");
  };

  CLI::App* sim = app.add_subcommand("simulate", "Monte-Carlo paths, lifts and summary CSV");
  CLI::App* solve = app.add_subcommand("solve", "spectral homogenized coefficients as JSON");
  CLI::App* compare = app.add_subcommand("compare", "Monte-Carlo estimates against spectral references");
  CLI::App* table = app.add_subcommand("table", "convergence table over epsilon with acceptance checks");
  CLI::App* keys = app.add_subcommand("keys", "list configuration keys with their defaults");
  for (CLI::App* s : {sim, solve, compare, table}) common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (keys->parsed()) {
      std::cout << ExperimentConfig().canonical();
      return kExitOk;
    }
    for (const std::string& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + s + "'");
      flags.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    const ExperimentConfig cfg = load_config(config_path, environ, flags);
    CommandResult res;
    if (sim->parsed())
      res = cmd_simulate(cfg, std::cerr);
    else if (solve->parsed())
      res = cmd_solve(cfg, std::cerr);
    else if (compare->parsed())
      res = cmd_compare(cfg, std::cerr);
    else
      res = cmd_table(cfg, std::cerr);
    for (const auto& f : res.files) std::cout << f << '\n';
    return res.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
}
