#ifndef HELFRICH_HARNESS_HPP
#define HELFRICH_HARNESS_HPP

/// Orchestration behind the command-line front end: simulate, solve, compare and
/// table commands writing CSV/JSON artifacts and evaluating acceptance checks.

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "helfrich/config.hpp"
#include "helfrich/homogenize.hpp"

namespace helfrich {

inline constexpr int kJsonSchemaVersion = 1;

enum ExitCode { kExitOk = 0, kExitError = 1, kExitCheckFailed = 2 };

struct CheckResult {
  Check check;
  /// "pass", "fail" or "skipped".
  std::string outcome;
  std::string detail;
};

struct CommandResult {
  std::vector<CheckResult> checks;
  std::vector<std::string> files;
  int exit_code() const;
};

nlohmann::json to_json(const HomogenizedQuantities& q);
HomogenizedQuantities quantities_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CheckResult& c);

/// Spectral reference for a configuration, loaded from `<out>/cache/<key>.json` when
/// present. `cache_hit` reports whether the cache was used.
HomogenizedQuantities spectral_reference(const ExperimentConfig& cfg, bool& cache_hit, std::ostream& log);

/// Key of the spectral cache: hash over model, regime and spectral settings.
std::uint64_t spectral_cache_key(const ExperimentConfig& cfg);

/// Checks that only need the spectral reference.
std::vector<CheckResult> spectral_checks(const ExperimentConfig& cfg, const HomogenizedQuantities& q);

/// Checks over a convergence table (rows in descending epsilon).
std::vector<CheckResult> table_checks(const ExperimentConfig& cfg, const std::vector<ConvergenceRow>& rows);

CommandResult cmd_simulate(const ExperimentConfig& cfg, std::ostream& log);
CommandResult cmd_solve(const ExperimentConfig& cfg, std::ostream& log);
CommandResult cmd_compare(const ExperimentConfig& cfg, std::ostream& log);
CommandResult cmd_table(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace helfrich

#endif
