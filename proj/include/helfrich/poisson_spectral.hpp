#ifndef HELFRICH_POISSON_SPECTRAL_HPP
#define HELFRICH_POISSON_SPECTRAL_HPP

/// Frozen-eta generator L0(eta) = F.grad + Sigma:grad grad on the Fourier basis,
/// its cell problem, the explicit invariant density rho_Y, weighted adjoint
/// splitting and Monte-Carlo resolvent oracles.

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "helfrich/fourier.hpp"
#include "helfrich/membrane.hpp"

namespace helfrich {

/// F, Sigma and sqrt|g| sampled on the collocation grid.
struct FrozenFields {
  RMat F1, F2, S11, S12, S22, sqrtg;
};

FrozenFields frozen_fields(const Membrane& membrane, const SurfaceState& eta, const FourierGrid& grid);

/// Galerkin matrix <e_p, L0 e_q>_w on the truncated basis, where the optional grid
/// weight w multiplies the trapezoid rule (w = 1 gives the plain dy projection).
CMat assemble_L0(const Membrane& membrane, const SurfaceState& eta, const FourierGrid& grid,
                 const RMat* weight = nullptr);

/// Gram matrix <e_p, w e_q> of a grid weight.
CMat gram_matrix(const FourierGrid& grid, const RMat& weight);

/// Grid values of L0 f for a coefficient field f.
RMat apply_L0_pointwise(const FrozenFields& ff, const FourierGrid& grid, const CMat& f);

struct PoissonSolution {
  int M = 0;
  int hermite_degree = 0;
  /// Row = hermite_index * n_fourier + fourier_index, one column per component.
  CMat coeffs;
  double centering_residual = 0.0;
  double solver_residual = 0.0;
  /// Frozen eta: max nodal residual. Joint: dropped constant-row defect.
  double consistency_defect = 0.0;
  /// Joint: L2(dy x rho_eta) norm of G chi + F at the quadrature nodes (includes truncation).
  double truncation_residual = 0.0;
  bool converged = false;
  std::string status;
  std::vector<std::string> trace;

  /// Fourier coefficient matrix of component i (frozen-eta solutions).
  CMat component(int i) const;
};

struct FixedEtaOptions {
  int M0 = 4;
  int M_max = 32;
  double tol = 1e-8;
};

/// Solves L0 chi = -F on one fixed grid (no refinement).
PoissonSolution solve_chi_fixed_eta_on(const Membrane& membrane, const SurfaceState& eta, const FourierGrid& grid);

/// One factorized frozen-eta cell problem; nearby states are solved by iterative
/// refinement against the stored factorization on the same grid.
class FrozenCellSolver {
 public:
  FrozenCellSolver(const Membrane& membrane, const SurfaceState& eta, const FourierGrid& grid);
  const PoissonSolution& solution() const;
  PoissonSolution solve_nearby(const SurfaceState& eta) const;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

/// Adaptive version: doubles M until the nodal residual meets tol.
PoissonSolution solve_chi_fixed_eta(const Membrane& membrane, const SurfaceState& eta,
                                    const FixedEtaOptions& opt = {});

/// Max over collocation nodes of |L0 chi + F| for a frozen-eta solution.
double nodal_residual(const Membrane& membrane, const SurfaceState& eta, const PoissonSolution& sol);

/// chi(y) for a frozen-eta solution.
Vec2 chi_value(const PoissonSolution& sol, const Vec2& y);

/// First-order small-amplitude approximation: Delta chi = -F solved mode by mode.
PoissonSolution perturbative_chi(const Membrane& membrane, const SurfaceState& eta, const FourierGrid& grid);

struct InvariantDensity {
  enum class Kind { ExplicitRhoY, GalerkinGEta };
  Kind kind = Kind::ExplicitRhoY;
  /// ExplicitRhoY: the frozen state and C with rho_Y = sqrt|g| / C.
  SurfaceState eta;
  double normalization = 1.0;
  /// GalerkinGEta: coefficients of g on the Hermite x Fourier basis.
  int M = 0;
  int hermite_degree = 0;
  CVec coeffs;
  /// Min of the density over the evaluation nodes it was checked on.
  double min_value = 0.0;

  const char* tag() const { return kind == Kind::ExplicitRhoY ? "explicit_rhoY" : "galerkin_g_eta"; }
};

InvariantDensity rho_Y_density(const Membrane& membrane, const SurfaceState& eta, const FourierGrid& grid);

/// rho_Y at the grid points (values sum to N^2, i.e. integrate to 1 by trapezoid).
RMat rho_Y_grid(const Membrane& membrane, const SurfaceState& eta, const FourierGrid& grid);

struct OperatorSplit {
  CMat adjoint;
  CMat symmetric;
  CMat antisymmetric;
};

/// Adjoint G* = W^{-1} G^H W for the inner product <u,v> = u^H W v (W Hermitian
/// positive definite), and G_S = (G+G*)/2, G_A = (G-G*)/2.
OperatorSplit symmetric_antisymmetric_split(const CMat& G, const CMat& W);

struct ResolventOptions {
  long n_paths = 10000;
  double dt = 1e-4;
  std::uint64_t seed = 7;
  int workers = 1;
  int bin_steps = 10;
};

struct ResolventEstimate {
  Vec2 value = Vec2::Zero();
  Vec2 se = Vec2::Zero();
  double lambda_hat = 0.0;
  double t_star = 0.0;
  double truncation_bound = 0.0;
  bool rate_fitted = false;
};

/// int_0^{T*} E[F(Y_t)] dt for the frozen-eta dynamics dY = F dt + sqrt(2 Sigma) dB, Y_0 = y0.
ResolventEstimate mc_resolvent_fixed_eta(const Membrane& membrane, const SurfaceState& eta, const Vec2& y0,
                                         const ResolventOptions& opt);

/// Same on the joint (Y, eta) chain with eta an OU process at the unscaled rates.
ResolventEstimate mc_resolvent_joint(const Membrane& membrane, const Vec2& y0, const SurfaceState& eta0,
                                     const ResolventOptions& opt);

}  // namespace helfrich

#endif
