#ifndef HELFRICH_JOINT_GENERATOR_HPP
#define HELFRICH_JOINT_GENERATOR_HPP

/// Fourier (y) x Hermite (eta) Galerkin discretization of G = L0 + L_eta, applied
/// matrix-free: coefficient fields are evaluated at tensor Gauss-Hermite nodes,
/// L0 acts pseudospectrally per node, and results are projected back.
/// Coefficients are stored as an (n_fourier x n_hermite) complex matrix.

#include <optional>

#include "helfrich/fourier.hpp"
#include "helfrich/hermite.hpp"
#include "helfrich/poisson_spectral.hpp"
#include "helfrich/sde_sim.hpp"

namespace helfrich {

class HermiteFourierBasis {
 public:
  /// quad_order = 0 selects 2d+2 points per coordinate.
  HermiteFourierBasis(const Membrane& membrane, int M, int d, int quad_order = 0);

  const Membrane& membrane() const { return membrane_; }
  const FourierGrid& grid() const { return grid_; }
  const MultiIndexSet& hermite() const { return hermite_; }
  const TensorRule& quadrature() const { return quad_; }
  int M() const { return grid_.M(); }
  int degree() const { return hermite_.degree(); }
  int n_fourier() const { return grid_.n_modes(); }
  int n_hermite() const { return hermite_.size(); }
  long size() const { return long(n_fourier()) * n_hermite(); }
  int n_nodes() const { return quad_.size(); }

  /// Physical surface state at quadrature node n.
  SurfaceState node_eta(int n) const;
  /// Basis polynomial values at the nodes (n_hermite x n_nodes).
  const RMat& node_values() const { return Hq_; }
  /// Eigenvalues of L_eta per Hermite index.
  const Eigen::VectorXd& eta_eigenvalues() const { return lambda_; }
  /// Standard deviation of each real eta coordinate.
  const Eigen::VectorXd& eta_sd() const { return sd_; }
  /// Max deviation of the discrete Gram matrix of the Hermite factor from I.
  double orthonormality_error() const;

  /// Fourier coefficient matrix of an expansion at node n.
  CMat at_node(const CMat& C, int n) const;
  /// Expansion of d/d eta_c (coefficients in the same basis; exact, degree drops by one).
  CMat eta_derivative(const CMat& C, int c) const;

 private:
  Membrane membrane_;
  FourierGrid grid_;
  MultiIndexSet hermite_;
  TensorRule quad_;
  Eigen::VectorXd sd_, lambda_;
  RMat Hq_;
};

struct NodeGeometry {
  RMat F1, F2, S11, S12, S22, sqrtg, rhs1, rhs2;  // rhs = Sigma H p / g (adjoint flux term)
};

class JointGenerator {
 public:
  explicit JointGenerator(const HermiteFourierBasis& basis, int workers = 1);

  const HermiteFourierBasis& basis() const { return basis_; }

  /// (L0 + L_eta) C.
  CMat apply(const CMat& C) const;
  /// (L0* + L_eta) C with L0* u = div(Sigma grad u - u Sigma H p / g) (divergence form w.r.t. dy).
  CMat apply_adjoint(const CMat& C) const;
  /// Projection of the drift components onto the basis.
  std::pair<CMat, CMat> project_drift() const;
  /// Inverse of the flat-membrane diagonal, zero on the constant mode.
  CMat preconditioner_diag() const;
  /// Dense complex matrix of G for small bases (row/col index = a * n_fourier + p).
  CMat dense() const;

  NodeGeometry node_geometry(int n) const;

 private:
  template <class Kernel>
  CMat map_nodes(const CMat& C, Kernel&& kernel) const;

  const HermiteFourierBasis& basis_;
  GeometryTable table_;
  int workers_;
};

struct JointSolveOptions {
  double tol = 1e-6;
  double gmres_tol = 1e-11;
  int max_iter = 300;
  int restart = 60;
  int workers = 1;
};

/// Solves (L0* + L_eta) g = 0 with the constant coefficient fixed to 1.
InvariantDensity solve_invariant_density(const HermiteFourierBasis& basis, const JointSolveOptions& opt = {});

/// Solves G chi = -F with the constant mode removed, then centers chi under rho.
PoissonSolution solve_chi_12(const HermiteFourierBasis& basis, const InvariantDensity& rho,
                             const JointSolveOptions& opt = {});

struct JointRefinement {
  int M0 = 6, d0 = 4, M_max = 10, d_max = 6;
};

/// solve_chi_12 with alternating M -> M+2, d -> d+1 refinement until the residual meets tol.
PoissonSolution solve_chi_12_adaptive(const Membrane& membrane, const JointRefinement& ref,
                                      const JointSolveOptions& opt = {});

/// g(y, eta) of a Galerkin density.
double galerkin_density_value(const HermiteFourierBasis& basis, const InvariantDensity& rho, const Vec2& y,
                              const SurfaceState& eta);

/// Rejection-sampling start law for the (1,2) simulation from a Galerkin density.
StartDensity make_start_density(const HermiteFourierBasis& basis, const InvariantDensity& rho);

/// int phi(y, eta) rho(dy, deta) by the basis quadrature; phi receives node index and grid point.
template <class Phi>
double integrate_rho(const HermiteFourierBasis& basis, const InvariantDensity& rho, Phi&& phi);

/// Max |y-average of g| over Hermite indices a != 0 (eta-marginal defect).
double eta_marginal_defect(const HermiteFourierBasis& basis, const InvariantDensity& rho);

/// Expansion of chi at (y, eta).
Vec2 chi12_value(const HermiteFourierBasis& basis, const PoissonSolution& chi, const Vec2& y, const SurfaceState& eta);

/// Leading-order small-amplitude solution of G chi = -F: F ~ -grad h Lap h is quadratic in eta,
/// and each (Fourier, Hermite) component is divided by the flat symbol -|2 pi p|^2 + lambda_a.
PoissonSolution perturbative_chi_12(const HermiteFourierBasis& basis);

template <class Phi>
double integrate_rho(const HermiteFourierBasis& basis, const InvariantDensity& rho, Phi&& phi) {
  const FourierGrid& grid = basis.grid();
  const CMat G = Eigen::Map<const CMat>(rho.coeffs.data(), basis.n_fourier(), basis.n_hermite());
  double total = 0.0;
  const int N = grid.N();
  for (int n = 0; n < basis.n_nodes(); ++n) {
    const RMat g = grid.synthesize(basis.at_node(G, n));
    double s = 0.0;
    for (int j = 0; j < N; ++j)
      for (int i = 0; i < N; ++i) s += phi(n, i, j) * g(i, j);
    total += basis.quadrature().weights[n] * s / double(N * N);
  }
  return total;
}

}  // namespace helfrich

#endif
