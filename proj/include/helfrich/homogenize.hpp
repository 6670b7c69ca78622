#ifndef HELFRICH_HOMOGENIZE_HPP
#define HELFRICH_HOMOGENIZE_HPP

/// Homogenized coefficients D, L, A (Ito) and A~ (Stratonovich) per regime, from
/// spectral cell solutions or from Monte-Carlo rough-path ensembles.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "helfrich/joint_generator.hpp"
#include "helfrich/poisson_spectral.hpp"
#include "helfrich/rough_lift.hpp"
#include "helfrich/sde_sim.hpp"
#include "helfrich/stats.hpp"

namespace helfrich {

enum class QuantitySource { Spectral, MonteCarlo };
const char* source_name(QuantitySource s);

struct HomogenizedQuantities {
  ScalingRegime regime;
  QuantitySource source = QuantitySource::Spectral;
  Mat2 D = Mat2::Identity();
  std::optional<Vec2> L;
  Mat2 A_ito = Mat2::Zero();
  Mat2 A_strato = Mat2::Zero();
  // Standard errors (Monte-Carlo only).
  Mat2 D_se = Mat2::Zero();
  Mat2 A_ito_se = Mat2::Zero();
  Mat2 A_strato_se = Mat2::Zero();

  // Spectral cross-checks.
  /// D through the martingale-bracket route (regime (1,2)).
  Mat2 D_bracket = Mat2::Zero();
  /// Second evaluation form of A~ (chi F form in regime (1,1)).
  Mat2 A_strato_alt = Mat2::Zero();
  /// Largest per-eta |A~| entry (regime (1,1)).
  double A_strato_pointwise = 0.0;
  /// max |A~ - (A - D + int Sigma)|.
  double A_form_defect = 0.0;
  /// Quadrature convergence: max change of D between eta orders.
  double eta_quadrature_change = 0.0;
  /// Regime (1,1): max over eta nodes of the nodal cell residual times w_n / w_max.
  double solver_residual = 0.0;
  double centering_residual = 0.0;
  /// Regime (1,2): L2 norm of G chi + F at the quadrature nodes (includes truncation).
  double truncation_residual = 0.0;
  /// Regime (1,2): max |<F>_rho| and the eta-marginal defect of the Galerkin density.
  double rho_centering = 0.0;
  double rho_marginal = 0.0;
  /// Basis used by the spectral evaluation.
  int fourier_modes = 0;
  int hermite_degree = 0;
  int eta_order = 0;
  std::string status = "ok";
};

struct AveragedCoefficients {
  Vec2 F_bar = Vec2::Zero();
  Mat2 Sigma_bar = Mat2::Identity();
  // Monte-Carlo version only.
  Vec2 F_se = Vec2::Zero();
  Mat2 Sigma_se = Mat2::Zero();
};

/// Tensor Gauss-Hermite average of F and Sigma over the stationary eta law.
AveragedCoefficients averaged_coefficients(const Membrane& membrane, const Vec2& x, int order = 10);

/// Plain Monte-Carlo average of the same (stationary samples, seed-determined).
AveragedCoefficients averaged_coefficients_mc(const Membrane& membrane, const Vec2& x, long n_samples,
                                              std::uint64_t seed);

/// Regime (0,1): D = x-average of Sigma_bar, L = x-average of F_bar, A = A~ = 0.
HomogenizedQuantities averaging_quantities(const Membrane& membrane, int order = 10, int x_points = 8);

/// Regime (1,2) quantities from a joint cell solution and invariant density on `basis`.
HomogenizedQuantities regime12_quantities(const PoissonSolution& chi, const InvariantDensity& rho,
                                          const HermiteFourierBasis& basis, int workers = 1);

struct Regime11Options {
  int eta_order = 8;
  /// Accepted |D(order) - D(order-2)|.
  double eta_tol = 1e-6;
  FixedEtaOptions cell{4, 24, 1e-8};
  int workers = 1;
  bool compute_L = true;
  /// Gauss-Hermite order of the separate L evaluation (each node adds 2K stencil solves).
  int L_order = 4;
};

/// Regime (1,1): frozen-eta cell solutions at Gauss-Hermite nodes in eta.
HomogenizedQuantities regime11_quantities(const Membrane& membrane, const Regime11Options& opt = {});

/// Spectral reference for any regime (joint Galerkin for (1,2)).
struct SpectralOptions {
  int fourier_modes = 6;
  int hermite_degree = 4;
  int eta_order = 8;
  double tol = 1e-6;
  int workers = 1;
};

struct SpectralBundle {
  HomogenizedQuantities q;
  // Regime (1,2) only.
  std::optional<HermiteFourierBasis> basis;
  std::optional<InvariantDensity> rho;
  std::optional<PoissonSolution> chi;
};

SpectralBundle spectral_quantities(const Membrane& membrane, const ScalingRegime& regime, const SpectralOptions& opt);

/// Per-replica reduction of one path: endpoint increment, full-interval lifts and Hoelder norm.
struct PathSummary {
  Vec2 dx = Vec2::Zero();
  Mat2 ito = Mat2::Zero();
  Mat2 strato = Mat2::Zero();
  double holder_x = 0.0;
};

PathSummary summarize_path(const PathSample& path, double holder_gamma = 0.0);

struct MatEstimate {
  Mat2 value = Mat2::Zero();
  Mat2 se = Mat2::Zero();
};

/// D^ = Cov(X_T - X_0) / (2T), standard errors from batch means.
MatEstimate mc_estimate_D(const std::vector<PathSummary>& s, double T, int n_batches = 20);

/// Ito: mean X_{0,T}/T - L L^T T/2 with batch-means SE. Stratonovich: mean X~_{0,T}/T - D^ - L L^T T/2
/// with a delete-one-batch jackknife SE plus the second-order variance of the m m^T term.
MatEstimate mc_estimate_area(const std::vector<PathSummary>& s, double T, Flavor flavor, const Vec2& L,
                             int n_batches = 20);

/// Seed for the simulation at one epsilon, distinct across epsilons.
std::uint64_t epsilon_seed(std::uint64_t master_seed, double epsilon);

struct ConvergenceRow {
  double epsilon = 0.0;
  long n_paths = 0;
  MatEstimate D, A_ito, A_strato;
  Mat2 ref_D = Mat2::Zero(), ref_A_ito = Mat2::Zero(), ref_A_strato = Mat2::Zero();
  /// Mean and standard error of norm_x^4 (0 when Hoelder norms are off).
  MeanSE holder_p4;
  double wall_s = 0.0;
};

struct TableConfig {
  ScalingRegime regime = ScalingRegime::hom11();
  std::vector<double> epsilons;
  double horizon = 1.0;
  /// 0 selects dt_max(regime, epsilon, horizon).
  double dt = 0.0;
  long n_paths = 1000;
  std::uint64_t seed = 1;
  int workers = 1;
  double holder_gamma = 0.0;
  bool timing = false;
};

/// One row at a single epsilon.
ConvergenceRow convergence_row(const Membrane& membrane, const TableConfig& cfg, double epsilon,
                               const HomogenizedQuantities& ref, const std::optional<StartDensity>& start = std::nullopt);

/// Rows in descending epsilon.
std::vector<ConvergenceRow> convergence_table(const Membrane& membrane, const TableConfig& cfg,
                                              const HomogenizedQuantities& ref,
                                              const std::optional<StartDensity>& start = std::nullopt);

/// |D^ - D_ref| (Frobenius) with a delta-method standard error.
MeanSE d_error(const ConvergenceRow& row);

void write_table_csv(const std::vector<ConvergenceRow>& rows, std::ostream& os);

}  // namespace helfrich

#endif
