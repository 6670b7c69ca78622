#include "helfrich/ou_process.hpp"

#include <cmath>
#include <stdexcept>

namespace helfrich {

OUStepper::OUStepper(const Membrane& membrane, double beta, double epsilon) : beta_(beta), epsilon_(epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  const double scale = std::pow(epsilon, -beta);
  rate_ = membrane.spectra().rate_per_coord(membrane.modes()) * scale;
  var_ = membrane.spectra().var_per_coord(membrane.modes());
  for (int i = 0; i < rate_.size(); ++i)
    if (!std::isfinite(rate_[i])) throw std::invalid_argument("OU rate overflow");
}

void OUStepper::prepare(double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  prepared_dt_ = dt;
  decay_.resize(rate_.size());
  noise_sd_.resize(rate_.size());
  for (int i = 0; i < rate_.size(); ++i) {
    decay_[i] = std::exp(-rate_[i] * dt);
    noise_sd_[i] = std::sqrt(var_[i] * -std::expm1(-2.0 * rate_[i] * dt));
  }
}

void OUStepper::step_prepared(SurfaceState& state, RandomStream& rng) const {
  for (int i = 0; i < state.size(); ++i) state[i] = decay_[i] * state[i] + noise_sd_[i] * rng.normal();
}

SurfaceState sample_stationary(const ModeSet& modes, const Spectra& spectra, RandomStream& rng) {
  const Eigen::VectorXd v = spectra.var_per_coord(modes);
  SurfaceState s(v.size());
  for (int i = 0; i < v.size(); ++i) s[i] = std::sqrt(v[i]) * rng.normal();
  return s;
}

SurfaceState exact_step(const SurfaceState& state, double dt, const OUStepper& stepper, RandomStream& rng) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  SurfaceState out(state.size());
  for (int i = 0; i < state.size(); ++i) {
    const double r = stepper.rates()[i], v = stepper.variances()[i];
    out[i] = std::exp(-r * dt) * state[i] + std::sqrt(v * -std::expm1(-2.0 * r * dt)) * rng.normal();
  }
  return out;
}

double ou_generator_eigenvalue(const MultiIndex& m, const Eigen::VectorXd& rates) {
  double lam = 0.0;
  for (size_t c = 0; c < m.size(); ++c) lam -= m[c] * rates[c];
  return lam;
}

Eigen::VectorXd apply_generator_eta(const Eigen::VectorXd& hermite_coeffs, const MultiIndexSet& set,
                                    const Eigen::VectorXd& rates) {
  if (set.dim() != rates.size()) throw std::invalid_argument("multi-index dimension does not match mode set");
  if (hermite_coeffs.size() != set.size()) throw std::invalid_argument("coefficient vector does not match basis");
  Eigen::VectorXd out(set.size());
  for (int i = 0; i < set.size(); ++i) out[i] = ou_generator_eigenvalue(set[i], rates) * hermite_coeffs[i];
  return out;
}

}  // namespace helfrich
