#ifndef HELFRICH_OU_PROCESS_HPP
#define HELFRICH_OU_PROCESS_HPP

/// Ornstein-Uhlenbeck membrane modes: stationary sampling, exact transitions
/// and the generator on the Hermite basis.

#include "helfrich/hermite.hpp"
#include "helfrich/membrane.hpp"
#include "helfrich/rng.hpp"

namespace helfrich {

/// Exact OU transition with rate Gamma/eps^beta per real coordinate.
class OUStepper {
 public:
  OUStepper(const Membrane& membrane, double beta, double epsilon);

  const Eigen::VectorXd& rates() const { return rate_; }
  const Eigen::VectorXd& variances() const { return var_; }
  double beta() const { return beta_; }
  double epsilon() const { return epsilon_; }

  /// Caches decay factors for a fixed step so the hot loop avoids exp().
  void prepare(double dt);
  /// Uses the cached step (prepare must have been called).
  void step_prepared(SurfaceState& state, RandomStream& rng) const;

 private:
  double beta_, epsilon_;
  Eigen::VectorXd rate_, var_;
  double prepared_dt_ = -1.0;
  Eigen::VectorXd decay_, noise_sd_;
};

SurfaceState sample_stationary(const ModeSet& modes, const Spectra& spectra, RandomStream& rng);

/// c' = e^{-r dt} c + N(0, v (1 - e^{-2 r dt})) per real coordinate.
SurfaceState exact_step(const SurfaceState& state, double dt, const OUStepper& stepper, RandomStream& rng);

/// Applies L_eta to a Hermite expansion (orthonormal w.r.t. the stationary law):
/// coefficient of multi-index m is multiplied by -(m . rates).
Eigen::VectorXd apply_generator_eta(const Eigen::VectorXd& hermite_coeffs, const MultiIndexSet& set,
                                    const Eigen::VectorXd& rates);

/// Eigenvalue -(m . rates) of L_eta on the Hermite function of multi-index m.
double ou_generator_eigenvalue(const MultiIndex& m, const Eigen::VectorXd& rates);

}  // namespace helfrich

#endif
