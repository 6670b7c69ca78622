#ifndef HELFRICH_CONFIG_HPP
#define HELFRICH_CONFIG_HPP

/// Experiment configuration: line-based `key = value` files with dotted keys,
/// HELFRICH_* environment overrides and command-line overrides, in that order.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "helfrich/membrane.hpp"
#include "helfrich/sde_sim.hpp"

namespace helfrich {

/// Acceptance checks the harness can evaluate.
enum class Check { Residual, AreaVanish, DriftVanish, Centering, Trend, Flat, StratoArea };
const char* check_name(Check c);
std::vector<Check> all_checks();

struct ExperimentConfig {
  ModelParams model;
  ScalingRegime regime = ScalingRegime::hom11();
  std::vector<double> epsilons{0.5};

  struct Sim {
    double horizon = 1.0;
    /// 0 selects dt_max per epsilon.
    double dt = 0.0;
    long n_paths = 1000;
    std::optional<Vec2> x0;
  } sim;

  std::uint64_t seed = 1;

  struct Spectral {
    int fourier_modes = 6;
    int hermite_degree = 4;
    int eta_order = 8;
    double tol = 1e-6;
  } spectral;

  struct Output {
    std::string dir = "out";
    bool binary_paths = false;
    long path_stride = 10;
    long paths_written = 10;
    bool timing = false;
  } output;

  double holder_gamma = 0.4;

  struct Checks {
    std::vector<Check> enabled = all_checks();
    double area_tol = 1e-6;
    double drift_tol = 1e-5;
    double centering_tol = 1e-6;
    double marginal_tol = 1e-8;
    /// Largest accepted relative D error at the smallest epsilon.
    double trend_rel = 0.2;
    double n_se = 3.0;
  } checks;

  int workers = 1;

  /// Sets one dotted key from its textual value; throws std::invalid_argument on
  /// an unknown key or malformed value.
  void set(const std::string& key, const std::string& value);
  /// Throws std::invalid_argument on any violated invariant.
  void validate() const;

  /// Canonical `key = value` listing of every key, sorted.
  std::string canonical() const;
  /// FNV-1a over the canonical listing without workers, output.dir and output.timing.
  std::uint64_t hash() const;

  bool enabled(Check c) const;
  SimConfig sim_config(double epsilon) const;
};

/// All recognized keys, sorted.
std::vector<std::string> config_keys();

/// Parses `key = value` lines ('#' starts a comment). Duplicate keys are rejected.
std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text,
                                                                   const std::string& origin = "config");

/// HELFRICH_SECTION_KEY environment variables mapped to dotted keys. Unknown
/// HELFRICH_* names are rejected.
std::vector<std::pair<std::string, std::string>> env_overrides(const char* const* envp);

/// Layers file < environment < flags, then validates.
ExperimentConfig load_config(const std::optional<std::string>& path, const char* const* envp,
                             const std::vector<std::pair<std::string, std::string>>& flags);

}  // namespace helfrich

#endif
