#include "helfrich/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "helfrich/util.hpp"

namespace helfrich {

const char* check_name(Check c) {
  switch (c) {
    case Check::Residual: return "residual";
    case Check::AreaVanish: return "area_vanish";
    case Check::DriftVanish: return "drift_vanish";
    case Check::Centering: return "centering";
    case Check::Trend: return "trend";
    case Check::Flat: return "flat";
    case Check::StratoArea: return "strato_area";
  }
  return "?";
}

std::vector<Check> all_checks() {
  return {Check::Residual, Check::AreaVanish, Check::DriftVanish, Check::Centering,
          Check::Trend,    Check::Flat,       Check::StratoArea};
}

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const char* what) {
  throw std::invalid_argument("config key '" + key + "': " + what + " (got '" + value + "')");
}

double to_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size() || !std::isfinite(x))
    bad(key, v, "expected a finite number");
  return x;
}

long to_long(const std::string& key, const std::string& v) {
  long x = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size()) bad(key, v, "expected an integer");
  return x;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size()) bad(key, v, "expected an unsigned integer");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad(key, v, "expected true or false");
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  if (trim(v).empty()) return out;
  for (const std::string& item : split(v, ',')) out.push_back(to_double(key, item));
  return out;
}

std::string list_str(const std::vector<double>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt_double(v[i]);
  return s;
}

std::vector<Check> to_checks(const std::string& key, const std::string& v) {
  if (v == "all") return all_checks();
  if (v == "none") return {};
  std::vector<Check> out;
  for (const std::string& item : split(v, ',')) {
    bool found = false;
    for (Check c : all_checks())
      if (item == check_name(c)) {
        if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
        found = true;
      }
    if (!found) bad(key, v, "expected all, none or a list of residual, area_vanish, drift_vanish, centering, trend, flat, strato_area");
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string checks_str(const std::vector<Check>& v) {
  if (v.empty()) return "none";
  if (v == all_checks()) return "all";
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += std::string(i ? "," : "") + check_name(v[i]);
  return s;
}

struct KeySpec {
  bool hashed;
  std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define HF_DOUBLE(field) \
  {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.field = to_double(k, v); }, \
   [](const ExperimentConfig& c) { return fmt_double(c.field); }}
#define HF_LONG(field) \
  {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.field = to_long(k, v); }, \
   [](const ExperimentConfig& c) { return std::to_string(c.field); }}
#define HF_INT(field) \
  {[](ExperimentConfig& c, const std::string& k, const std::string& v) { \
     const long x = to_long(k, v); \
     if (x < -1000000 || x > 1000000) bad(k, v, "integer out of range"); \
     c.field = int(x); \
   }, \
   [](const ExperimentConfig& c) { return std::to_string(c.field); }}
#define HF_BOOL(field) \
  {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.field = to_bool(k, v); }, \
   [](const ExperimentConfig& c) { return std::string(c.field ? "true" : "false"); }}

struct Accessor {
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

const std::map<std::string, KeySpec>& key_table() {
  static const std::map<std::string, KeySpec> table = [] {
    std::map<std::string, KeySpec> t;
    auto add = [&t](const std::string& k, bool hashed, Accessor a) { t[k] = KeySpec{hashed, a.set, a.get}; };
    add("model.kappa_star", true, HF_DOUBLE(model.kappa_star));
    add("model.sigma_star", true, HF_DOUBLE(model.sigma_star));
    add("model.cutoff", true, HF_INT(model.cutoff));
    add("regime", true,
        {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
           try {
             c.regime = ScalingRegime::parse(v);
           } catch (const std::exception&) {
             bad(k, v, "expected avg, hom12 or hom11");
           }
         },
         [](const ExperimentConfig& c) { return c.regime.name(); }});
    add("epsilons", true,
        {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.epsilons = to_list(k, v); },
         [](const ExperimentConfig& c) { return list_str(c.epsilons); }});
    add("sim.horizon", true, HF_DOUBLE(sim.horizon));
    add("sim.dt", true, HF_DOUBLE(sim.dt));
    add("sim.n_paths", true, HF_LONG(sim.n_paths));
    add("sim.x0", true,
        {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
           if (v == "stationary") {
             c.sim.x0.reset();
             return;
           }
           const std::vector<double> x = to_list(k, v);
           if (x.size() != 2) bad(k, v, "expected 'stationary' or two comma-separated numbers");
           c.sim.x0 = Vec2(x[0], x[1]);
         },
         [](const ExperimentConfig& c) {
           return c.sim.x0 ? fmt_double((*c.sim.x0)[0]) + "," + fmt_double((*c.sim.x0)[1]) : std::string("stationary");
         }});
    add("seed", true,
        {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.seed = to_u64(k, v); },
         [](const ExperimentConfig& c) { return std::to_string(c.seed); }});
    add("spectral.fourier_modes", true, HF_INT(spectral.fourier_modes));
    add("spectral.hermite_degree", true, HF_INT(spectral.hermite_degree));
    add("spectral.eta_order", true, HF_INT(spectral.eta_order));
    add("spectral.tol", true, HF_DOUBLE(spectral.tol));
    add("output.dir", false,
        {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
           if (v.empty()) bad(k, v, "expected a directory");
           c.output.dir = v;
         },
         [](const ExperimentConfig& c) { return c.output.dir; }});
    add("output.binary_paths", true, HF_BOOL(output.binary_paths));
    add("output.path_stride", true, HF_LONG(output.path_stride));
    add("output.paths_written", true, HF_LONG(output.paths_written));
    add("output.timing", false, HF_BOOL(output.timing));
    add("lift.holder_gamma", true, HF_DOUBLE(holder_gamma));
    add("checks.enabled", true,
        {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.checks.enabled = to_checks(k, v); },
         [](const ExperimentConfig& c) { return checks_str(c.checks.enabled); }});
    add("checks.area_tol", true, HF_DOUBLE(checks.area_tol));
    add("checks.drift_tol", true, HF_DOUBLE(checks.drift_tol));
    add("checks.centering_tol", true, HF_DOUBLE(checks.centering_tol));
    add("checks.marginal_tol", true, HF_DOUBLE(checks.marginal_tol));
    add("checks.trend_rel", true, HF_DOUBLE(checks.trend_rel));
    add("checks.n_se", true, HF_DOUBLE(checks.n_se));
    add("workers", false, HF_INT(workers));
    return t;
  }();
  return table;
}

#undef HF_DOUBLE
#undef HF_LONG
#undef HF_INT
#undef HF_BOOL

std::string env_name(const std::string& key) {
  std::string s = "HELFRICH_";
  for (char c : key) s += c == '.' ? '_' : char(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const auto& t = key_table();
  const auto it = t.find(key);
  if (it == t.end()) throw std::invalid_argument("unknown config key '" + key + "'");
  it->second.set(*this, key, trim(value));
}

void ExperimentConfig::validate() const {
  model.validate();
  regime.validate();
  if (epsilons.empty()) throw std::invalid_argument("epsilons: list is empty");
  for (double e : epsilons)
    if (!(e > 0.0 && e <= 1.0)) throw std::invalid_argument("epsilons: values must lie in (0, 1]");
  if (!(sim.horizon > 0.0)) throw std::invalid_argument("sim.horizon must be positive");
  if (sim.dt < 0.0) throw std::invalid_argument("sim.dt must be non-negative (0 selects the default)");
  if (sim.n_paths < 2) throw std::invalid_argument("sim.n_paths must be at least 2");
  if (spectral.fourier_modes < 1 || spectral.fourier_modes > 64)
    throw std::invalid_argument("spectral.fourier_modes must lie in [1, 64]");
  if (spectral.hermite_degree < 0 || spectral.hermite_degree > 6)
    throw std::invalid_argument("spectral.hermite_degree must lie in [0, 6]");
  if (spectral.eta_order < 1 || spectral.eta_order > 40)
    throw std::invalid_argument("spectral.eta_order must lie in [1, 40]");
  if (!(spectral.tol > 0.0)) throw std::invalid_argument("spectral.tol must be positive");
  if (output.path_stride < 1) throw std::invalid_argument("output.path_stride must be at least 1");
  if (output.paths_written < 0) throw std::invalid_argument("output.paths_written must be non-negative");
  if (holder_gamma < 0.0 || holder_gamma >= 0.5) throw std::invalid_argument("lift.holder_gamma must lie in [0, 0.5)");
  for (double v : {checks.area_tol, checks.drift_tol, checks.centering_tol, checks.marginal_tol, checks.trend_rel,
                   checks.n_se})
    if (!(v > 0.0)) throw std::invalid_argument("checks tolerances must be positive");
  if (workers < 1) throw std::invalid_argument("workers must be at least 1");
  for (double e : epsilons) sim_config(e).validate(model.cutoff == 0);
}

std::string ExperimentConfig::canonical() const {
  std::string s;
  for (const auto& [k, spec] : key_table()) s += k + " = " + spec.get(*this) + "\n";
  return s;
}

std::uint64_t ExperimentConfig::hash() const {
  std::string s;
  for (const auto& [k, spec] : key_table())
    if (spec.hashed) s += k + " = " + spec.get(*this) + "\n";
  return fnv1a(s);
}

bool ExperimentConfig::enabled(Check c) const {
  return std::find(checks.enabled.begin(), checks.enabled.end(), c) != checks.enabled.end();
}

SimConfig ExperimentConfig::sim_config(double epsilon) const {
  SimConfig sc;
  sc.regime = regime;
  sc.epsilon = epsilon;
  sc.horizon = sim.horizon;
  const double dmax = sim.dt > 0.0 ? sim.dt : dt_max(regime, epsilon, sim.horizon);
  sc.dt = sim.horizon / std::ceil(sim.horizon / dmax - 1e-9);
  sc.n_paths = sim.n_paths;
  sc.x0 = sim.x0;
  return sc;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& kv : key_table()) out.push_back(kv.first);
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text, const std::string& origin) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw std::invalid_argument(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw std::invalid_argument(where + ": empty key");
    if (!key_table().count(key)) throw std::invalid_argument(where + ": unknown config key '" + key + "'");
    for (const auto& kv : out)
      if (kv.first == key) throw std::invalid_argument(where + ": duplicate key '" + key + "'");
    out.emplace_back(key, value);
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> env_overrides(const char* const* envp) {
  std::map<std::string, std::string> by_env;
  for (const auto& kv : key_table()) by_env[env_name(kv.first)] = kv.first;
  std::vector<std::pair<std::string, std::string>> out;
  if (!envp) return out;
  for (const char* const* e = envp; *e; ++e) {
    const std::string entry(*e);
    if (entry.rfind("HELFRICH_", 0) != 0) continue;
    const auto eq = entry.find('=');
    const std::string name = entry.substr(0, eq);
    const auto it = by_env.find(name);
    if (it == by_env.end()) throw std::invalid_argument("unknown environment override " + name);
    out.emplace_back(it->second, eq == std::string::npos ? "" : entry.substr(eq + 1));
  }
  std::sort(out.begin(), out.end());
  return out;
}

ExperimentConfig load_config(const std::optional<std::string>& path, const char* const* envp,
                             const std::vector<std::pair<std::string, std::string>>& flags) {
  ExperimentConfig cfg;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw std::runtime_error("cannot read config file " + *path);
    std::ostringstream ss;
    ss << in.rdbuf();
    for (const auto& [k, v] : parse_config_text(ss.str(), *path)) cfg.set(k, v);
  }
  for (const auto& [k, v] : env_overrides(envp)) cfg.set(k, v);
  for (const auto& [k, v] : flags) cfg.set(k, v);
  cfg.validate();
  return cfg;
}

}  // namespace helfrich
