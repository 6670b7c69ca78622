#include <doctest.h>

#include <cmath>

#include "helfrich/joint_generator.hpp"
#include "helfrich/poisson_spectral.hpp"
#include "test_support.hpp"

using namespace helfrich;

TEST_SUITE("joint_generator") {
  TEST_CASE("basis layout") {
    const Membrane m(ModelParams{1, 1, 1});
    const HermiteFourierBasis b(m, 3, 2);
    CHECK(b.n_fourier() == 49);
    CHECK(b.n_hermite() == 15);
    CHECK(b.size() == 49 * 15);
    CHECK(b.n_nodes() == 1296);  // (2d+2)^K
    CHECK(b.orthonormality_error() < 1e-12);
    const Eigen::VectorXd sd = m.spectra().var_per_coord(m.modes()).cwiseSqrt();
    CHECK((b.eta_sd() - sd).norm() < 1e-15);
    for (int a = 0; a < b.n_hermite(); ++a)
      CHECK(b.eta_eigenvalues()[a] ==
            doctest::Approx(ou_generator_eigenvalue(b.hermite()[a], m.spectra().rate_per_coord(m.modes()))));
  }

  TEST_CASE("degree-zero block is the eta-average of the frozen generator") {
    const Membrane m(ModelParams{1, 1, 1});
    const HermiteFourierBasis b(m, 2, 1);
    const JointGenerator G(b);
    const CMat dense = G.dense();
    const int nF = b.n_fourier();
    // Independent tensor rule of the same order in standardized coordinates.
    const TensorRule rule = tensor_gauss_hermite(m.dim(), 4);
    const Eigen::VectorXd sd = m.spectra().var_per_coord(m.modes()).cwiseSqrt();
    CMat avg = CMat::Zero(nF, nF);
    for (int n = 0; n < rule.size(); ++n) {
      const SurfaceState eta = sd.cwiseProduct(rule.nodes.col(n));
      avg += rule.weights[n] * assemble_L0(m, eta, b.grid());
    }
    const CMat block = dense.topLeftCorner(nF, nF);
    CHECK((block - avg).cwiseAbs().maxCoeff() <= 1e-10 * avg.cwiseAbs().maxCoeff());
    // Same through the matrix-free action on a real field.
    CMat f = CMat::Zero(nF, b.n_hermite());
    RandomStream r(50, 0, kStreamAux);
    for (int p = 0; p < nF; ++p) {
      const auto mp = b.grid().mode(p);
      const int q = b.grid().mode_index(-mp[0], -mp[1]);
      if (q < p) continue;
      f(p, 0) = p == q ? cplx(r.normal(), 0.0) : cplx(r.normal(), r.normal());
      f(q, 0) = std::conj(f(p, 0));
    }
    const CMat Gf = G.apply(f);
    CHECK((Gf.col(0) - avg * f.col(0)).cwiseAbs().maxCoeff() <= 1e-10 * avg.cwiseAbs().maxCoeff());
    // The Hermite part is diagonal: constants are annihilated.
    CMat one = CMat::Zero(nF, b.n_hermite());
    one(b.grid().mode_index(0, 0), 0) = 1.0;
    CHECK(G.apply(one).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("invariant density: normalization, marginal and centering") {
    const Membrane m(ModelParams{1, 1, 1});
    const HermiteFourierBasis b(m, 4, 2);
    const InvariantDensity rho = solve_invariant_density(b);
    CHECK(rho.kind == InvariantDensity::Kind::GalerkinGEta);
    CHECK(rho.min_value > 0.0);
    const JointGenerator G(b);
    const CMat g = Eigen::Map<const CMat>(rho.coeffs.data(), b.n_fourier(), b.n_hermite());
    CHECK(G.apply_adjoint(g).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(integrate_rho(b, rho, [](int, int, int) { return 1.0; }) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(eta_marginal_defect(b, rho) <= 1e-8);
    const double meanF1 = integrate_rho(b, rho, [&](int n, int i, int j) {
      return m.drift_F(b.grid().point(i, j), b.node_eta(n))[0];
    });
    CHECK(std::abs(meanF1) <= 1e-6);
  }

  TEST_CASE("joint cell problem") {
    const Membrane m(ModelParams{1, 1, 1});
    const HermiteFourierBasis b(m, 4, 2);
    const InvariantDensity rho = solve_invariant_density(b);
    const PoissonSolution chi = solve_chi_12(b, rho);
    CHECK(chi.converged);
    CHECK(chi.status == "ok");
    CHECK(chi.solver_residual <= 1e-6);
    CHECK(chi.centering_residual <= 1e-10);
    CHECK_FALSE(chi.trace.empty());
    // F is even in eta, so chi is too.
    RandomStream r(51, 0, kStreamAux);
    const SurfaceState eta = test::stationary_eta(m, r);
    const Vec2 y = test::random_point(r);
    CHECK((chi12_value(b, chi, y, eta) - chi12_value(b, chi, y, -eta)).norm() < 1e-10);
  }

  TEST_CASE("small-amplitude membrane: joint and frozen cell solutions agree") {
    const Membrane m = Membrane(ModelParams{1, 1, 1}).with_scaled_variance(1e-2);
    const HermiteFourierBasis b(m, 4, 2);
    const InvariantDensity rho = solve_invariant_density(b);
    const PoissonSolution chi = solve_chi_12(b, rho);
    RandomStream r(52, 0, kStreamAux);
    double num = 0, den = 0;
    for (int t = 0; t < 10; ++t) {
      const SurfaceState eta = test::stationary_eta(m, r);
      const PoissonSolution fr = solve_chi_fixed_eta(m, eta);
      for (int k = 0; k < 5; ++k) {
        const Vec2 y = test::random_point(r);
        num = std::max(num, (chi12_value(b, chi, y, eta) - chi_value(fr, y)).norm());
        den = std::max(den, chi_value(fr, y).norm());
      }
    }
    MESSAGE("relative difference " << num / den);
    CHECK(num <= 0.05 * den);
  }

  TEST_CASE("perturbative joint solution at small amplitude") {
    const Membrane m = Membrane(ModelParams{1, 1, 1}).with_scaled_variance(1e-2);
    const HermiteFourierBasis b(m, 4, 2);
    const PoissonSolution chi = solve_chi_12(b, solve_invariant_density(b));
    const PoissonSolution pert = perturbative_chi_12(b);
    CHECK((chi.coeffs - pert.coeffs).norm() <= 0.05 * chi.coeffs.norm());
  }

  TEST_CASE("monte-carlo resolvent on the joint chain") {
    const Membrane m(ModelParams{1, 1, 1});
    const HermiteFourierBasis b(m, 6, 4);
    const PoissonSolution chi = solve_chi_12(b, solve_invariant_density(b));
    RandomStream r(53, 0, kStreamAux);
    ResolventOptions o;
    o.n_paths = 1000;
    for (int p = 0; p < 3; ++p) {
      const SurfaceState eta = test::stationary_eta(m, r);
      const Vec2 y = test::random_point(r);
      const ResolventEstimate e = mc_resolvent_joint(m, y, eta, o);
      const Vec2 c = chi12_value(b, chi, y, eta);
      for (int i = 0; i < 2; ++i) CHECK(std::abs(e.value[i] - c[i]) <= 3 * e.se[i]);
    }
  }
}
