#include <doctest.h>

#include <cmath>

#include "helfrich/hermite.hpp"
#include "helfrich/ou_process.hpp"
#include "helfrich/stats.hpp"
#include "test_support.hpp"

using namespace helfrich;

TEST_SUITE("ou_process") {
  TEST_CASE("stationary variance of a single coordinate") {
    const Membrane m(ModelParams{1, 1, 1});
    const int c = test::re_coord(m, {1, 0});
    RandomStream r(11, 0, kStreamInit);
    std::vector<double> v(100000), sq(100000);
    for (size_t i = 0; i < v.size(); ++i) {
      v[i] = test::stationary_eta(m, r)[c];
      sq[i] = v[i] * v[i];
    }
    const MeanSE var = mean_se(sq);
    CHECK(std::abs(var.mean - 3.1289e-4) < 3 * var.se);
    CHECK(std::abs(var.mean - 0.5 * m.spectra().pi[0]) < 3 * var.se);
  }

  TEST_CASE("stepper rates and variances follow the regime scaling") {
    const Membrane m(ModelParams{1, 1, 1});
    const OUStepper s(m, 2, 0.5);
    const Eigen::VectorXd r = m.spectra().rate_per_coord(m.modes());
    for (int i = 0; i < m.dim(); ++i) {
      CHECK(s.rates()[i] == doctest::Approx(r[i] / 0.25));
      CHECK(s.variances()[i] == doctest::Approx(m.spectra().var_per_coord(m.modes())[i]));
    }
  }

  TEST_CASE("long exact steps forget the start") {
    const Membrane m(ModelParams{1, 1, 1});
    const OUStepper s(m, 1, 1.0);
    const int c = test::re_coord(m, {1, 0});
    const double rate = s.rates()[c], var = s.variances()[c];
    const SurfaceState start = SurfaceState::Constant(m.dim(), 1.0);
    RandomStream r(12, 0, kStreamEta);
    std::vector<double> draws(10000);
    for (double& d : draws) d = exact_step(start, 20.0 / rate, s, r)[c];
    const double sd = std::sqrt(var);
    CHECK(ks_one_sample(draws, [sd](double x) { return normal_cdf(x / sd); }) > 0.01);
  }

  TEST_CASE("autocovariance decays at the mode rate") {
    const Membrane m(ModelParams{1, 1, 1});
    OUStepper s(m, 1, 1.0);
    const int c = test::re_coord(m, {1, 0});
    const double rate = s.rates()[c], var = s.variances()[c];
    for (double lag : {0.1, 0.5}) {
      const double dt = lag / rate;
      s.prepare(dt);
      RandomStream r(13, 0, kStreamEta);
      SurfaceState eta = test::stationary_eta(m, r);
      std::vector<double> prod(200000);
      for (double& p : prod) {
        const double before = eta[c];
        s.step_prepared(eta, r);
        p = before * eta[c];
      }
      const MeanSE ac = batch_means(prod, 50);
      CHECK(std::abs(ac.mean - var * std::exp(-lag)) < 3 * ac.se);
      // prepared and unprepared steps agree in law: same stream gives same draw.
      RandomStream r1(14, 0, kStreamEta), r2(14, 0, kStreamEta);
      SurfaceState a = eta;
      s.step_prepared(a, r1);
      CHECK((a - exact_step(eta, dt, s, r2)).norm() < 1e-15);
    }
  }

  TEST_CASE("generator eigenvalues on first-order hermite functions") {
    const Membrane m(ModelParams{1, 1, 1});
    const Eigen::VectorXd rates = m.spectra().rate_per_coord(m.modes());
    const MultiIndexSet set(m.dim(), 2);
    for (int c = 0; c < m.dim(); ++c) {
      MultiIndex e(m.dim(), 0);
      e[c] = 1;
      Eigen::VectorXd coeff = Eigen::VectorXd::Zero(set.size());
      coeff[set.find(e)] = 1.0;
      const Eigen::VectorXd out = apply_generator_eta(coeff, set, rates);
      CHECK(out[set.find(e)] == doctest::Approx(-rates[c]));
      CHECK(ou_generator_eigenvalue(e, rates) == doctest::Approx(-rates[c]));
      CHECK(std::abs(ou_generator_eigenvalue(e, rates) + 254.3334) < 1e-4);
    }
  }

  TEST_CASE("generator matches a pointwise finite-difference oracle") {
    const Membrane m(ModelParams{1, 1, 1});
    const Eigen::VectorXd rates = m.spectra().rate_per_coord(m.modes());
    const int K = m.dim();
    const MultiIndexSet set(K, 2);
    RandomStream r(15, 0, kStreamAux);
    Eigen::VectorXd coeff(set.size());
    for (int i = 0; i < set.size(); ++i) coeff[i] = r.normal();
    const Eigen::VectorXd Lc = apply_generator_eta(coeff, set, rates);
    // In standardized coordinates L_eta = sum_c r_c (d^2/dxi_c^2 - xi_c d/dxi_c);
    // central differences are exact on quadratics, so d only trades off round-off.
    const double d = 1e-2;
    for (int t = 0; t < 20; ++t) {
      Eigen::VectorXd xi(K);
      for (int i = 0; i < K; ++i) xi[i] = 1.5 * r.normal();
      const double f0 = hermite_expansion(set, coeff, xi);
      double Lf = 0.0;
      for (int c = 0; c < K; ++c) {
        Eigen::VectorXd p = xi, q = xi;
        p[c] += d;
        q[c] -= d;
        const double fp = hermite_expansion(set, coeff, p), fq = hermite_expansion(set, coeff, q);
        Lf += rates[c] * ((fp - 2 * f0 + fq) / (d * d) - xi[c] * (fp - fq) / (2 * d));
      }
      CHECK(std::abs(hermite_expansion(set, Lc, xi) - Lf) < 1e-6);
    }
  }
}
