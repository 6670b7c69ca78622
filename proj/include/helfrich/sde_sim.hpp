#ifndef HELFRICH_SDE_SIM_HPP
#define HELFRICH_SDE_SIM_HPP

/// Euler-Maruyama integration of the rescaled particle/membrane system
///   dX = eps^-a F(X/eps^a, eta) dt + sqrt(2 Sigma(X/eps^a, eta)) dB,
///   d eta = OU with rates Gamma/eps^b (exact transitions).

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "helfrich/membrane.hpp"
#include "helfrich/ou_process.hpp"
#include "helfrich/util.hpp"

namespace helfrich {

struct ScalingRegime {
  int alpha = 1;
  int beta = 1;

  static ScalingRegime averaging() { return {0, 1}; }
  static ScalingRegime hom12() { return {1, 2}; }
  static ScalingRegime hom11() { return {1, 1}; }
  /// Parses "avg" | "hom12" | "hom11".
  static ScalingRegime parse(const std::string& name);
  std::string name() const;
  void validate() const;
  bool operator==(const ScalingRegime&) const = default;
};

struct SimConfig {
  ScalingRegime regime = ScalingRegime::hom11();
  double epsilon = 0.5;
  double horizon = 1.0;
  double dt = 1e-3;
  long n_paths = 1;
  std::uint64_t master_seed = 1;
  /// Starting point; nullopt draws the start from the stationary law.
  std::optional<Vec2> x0;
  bool record_eta = false;

  long n_steps() const;
  /// Throws std::invalid_argument on any violated invariant, before stepping.
  /// The dt_max bound is waived for a flat membrane, whose coefficients are constant.
  void validate(bool flat_membrane = false) const;
  std::uint64_t hash() const;
};

/// Largest admissible dt: 1e-2 eps^{2 alpha}, or 1e-3 T in the averaging regime.
double dt_max(const ScalingRegime& regime, double epsilon, double horizon);

struct PathSample {
  double dt = 0.0;
  double scale = 1.0;  // eps^alpha
  std::uint64_t replica = 0;
  std::vector<Vec2> x;    // n_steps+1 unwrapped positions
  Eigen::MatrixXd eta;    // K x (n_steps+1), empty unless recorded

  long n_steps() const { return static_cast<long>(x.size()) - 1; }
  double time(long i) const { return i * dt; }
  Vec2 y(long i) const;
};

/// Optional stationary start density for (Y, eta); `bound(eta)` must dominate density(., eta).
struct StartDensity {
  std::function<double(const Vec2&, const SurfaceState&)> density;
  std::function<double(const SurfaceState&)> bound;
};

/// Square root of 2 Sigma for a symmetric PSD 2x2 Sigma via its eigendecomposition.
Mat2 sqrt_2sigma(const Mat2& sigma);

class PathSimulator {
 public:
  PathSimulator(const Membrane& membrane, const SimConfig& config, std::optional<StartDensity> start = std::nullopt);

  const SimConfig& config() const { return config_; }
  const Membrane& membrane() const { return membrane_; }

  PathSample simulate(std::uint64_t replica) const;

  /// Samples Y from density prop. to sqrt(1+|grad h(., eta)|^2) by rejection.
  Vec2 sample_rho_y(const SurfaceState& eta, RandomStream& rng) const;

 private:
  Membrane membrane_;
  SimConfig config_;
  std::optional<StartDensity> start_;
  OUStepper stepper_;
  double scale_;
};

std::vector<PathSample> batch_simulate(const PathSimulator& sim, int workers = 1);

/// Streaming form: each path is reduced to a summary and discarded. Summaries
/// are returned in replica order, so any fold over them is order-fixed.
template <class Summary, class F>
std::vector<Summary> batch_map(const PathSimulator& sim, F&& summarize, int workers = 1) {
  const long n = sim.config().n_paths;
  std::vector<Summary> out(static_cast<size_t>(n));
  parallel_for(n, workers, [&](long r) { out[r] = summarize(sim.simulate(static_cast<std::uint64_t>(r))); });
  return out;
}

/// Little-endian f64 dump: magic "HLFPATH1", u64 config hash, u64 steps, u64 K,
/// f64 dt, f64 scale, then per time (t, x1, x2, eta...).
void write_path_binary(const PathSample& path, std::uint64_t config_hash, std::ostream& os);
PathSample read_path_binary(std::istream& is, std::uint64_t* config_hash = nullptr);

/// Columns replica,t,x1,x2,y1,y2 every `stride` steps.
void write_paths_csv(const std::vector<PathSample>& paths, long stride, std::ostream& os);

}  // namespace helfrich

#endif
