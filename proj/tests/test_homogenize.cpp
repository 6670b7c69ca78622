#include <doctest.h>

#include <cmath>
#include <sstream>

#include "helfrich/homogenize.hpp"
#include "test_support.hpp"

using namespace helfrich;

namespace {

Mat2 antisym(const Mat2& a) { return 0.5 * (a - a.transpose()); }

PathSample two_point(const Vec2& a, const Vec2& b) {
  PathSample p;
  p.dt = 1.0;
  p.x = {a, b};
  return p;
}

}  // namespace

TEST_SUITE("homogenize") {
  TEST_CASE("averaged sigma is a contraction average") {
    const Membrane m(ModelParams{1, 1, 1});
    RandomStream r(61, 0, kStreamAux);
    for (int t = 0; t < 5; ++t) {
      const Vec2 x = test::random_point(r);
      const AveragedCoefficients a = averaged_coefficients(m, x);
      const Eigen::Vector2d ev = Eigen::SelfAdjointEigenSolver<Mat2>(a.Sigma_bar).eigenvalues();
      CHECK(ev.minCoeff() > 0.0);
      CHECK(ev.maxCoeff() <= 1.0);
      CHECK(std::abs(a.Sigma_bar(0, 1) - a.Sigma_bar(1, 0)) < 1e-15);
    }
  }

  TEST_CASE("quadrature and monte-carlo averages agree") {
    const Membrane m(ModelParams{1, 1, 1});
    const Vec2 x(0.3, 0.7);
    const AveragedCoefficients q = averaged_coefficients(m, x);
    const AveragedCoefficients mc = averaged_coefficients_mc(m, x, 100000, 62);
    for (int i = 0; i < 2; ++i) {
      CHECK(std::abs(q.F_bar[i] - mc.F_bar[i]) <= 3 * mc.F_se[i]);
      for (int j = 0; j < 2; ++j) CHECK(std::abs(q.Sigma_bar(i, j) - mc.Sigma_bar(i, j)) <= 3 * mc.Sigma_se(i, j));
    }
    CHECK((averaged_coefficients(m, x, 12).Sigma_bar - q.Sigma_bar).cwiseAbs().maxCoeff() < 1e-8);
  }

  TEST_CASE("flat membrane in every regime") {
    const Membrane m(ModelParams{1, 1, 0});
    for (const ScalingRegime& reg : {ScalingRegime::averaging(), ScalingRegime::hom11(), ScalingRegime::hom12()}) {
      SpectralOptions o;
      o.fourier_modes = 2;
      o.hermite_degree = 1;
      const HomogenizedQuantities q = spectral_quantities(m, reg, o).q;
      CHECK(test::max_abs(q.D - Mat2::Identity()) < 1e-14);
      CHECK(test::max_abs(q.A_ito) < 1e-14);
      CHECK(test::max_abs(q.A_strato) < 1e-14);
      CHECK(q.status == "ok");
    }
  }

  TEST_CASE("averaging regime") {
    const Membrane m(ModelParams{1, 1, 1});
    const HomogenizedQuantities q = averaging_quantities(m);
    CHECK(q.L.has_value());
    CHECK(q.L->norm() < 1e-12);
    CHECK(test::max_abs(q.A_ito) == 0.0);
    Mat2 avg = Mat2::Zero();
    const int n = 8;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) avg += averaged_coefficients(m, Vec2(double(i) / n, double(j) / n)).Sigma_bar;
    avg /= n * n;
    CHECK(test::max_abs(q.D - avg) < 1e-12);
    CHECK(q.D(0, 0) < 1.0);

    // Self-consistency against the simulated eta-fast system.
    TableConfig tc;
    tc.regime = ScalingRegime::averaging();
    tc.dt = 1e-3;
    tc.n_paths = 2000;
    tc.seed = 63;
    const ConvergenceRow row = convergence_row(m, tc, 0.1, q);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) CHECK(std::abs(row.D.value(i, j) - q.D(i, j)) <= 3 * row.D.se(i, j));
  }

  TEST_CASE("regime (1,2) quantities") {
    const Membrane m(ModelParams{1, 1, 1});
    SpectralOptions o;
    o.fourier_modes = 4;
    o.hermite_degree = 2;
    const SpectralBundle b = spectral_quantities(m, ScalingRegime::hom12(), o);
    const HomogenizedQuantities& q = b.q;
    CHECK(q.status == "ok");
    // The two routes differ only through the Hermite truncation of G chi + F.
    const double gap2 = test::max_abs(q.D - q.D_bracket);
    CHECK(gap2 <= 1e-6);
    o.hermite_degree = 4;
    const HomogenizedQuantities q4 = spectral_quantities(m, ScalingRegime::hom12(), o).q;
    const double gap4 = test::max_abs(q4.D - q4.D_bracket);
    CHECK(gap4 <= 1e-7);
    CHECK(gap4 < 0.2 * gap2);
    CHECK(std::abs(q4.D(0, 0) - q.D(0, 0)) < 1e-4);
    CHECK(test::max_abs(antisym(q.A_ito) - antisym(q.A_strato)) <= 1e-12);
    CHECK(test::max_abs(q.D - q.D.transpose()) < 1e-14);
    CHECK(q.D(0, 0) < 1.0);
    CHECK(q.D(0, 0) > 0.5);
    CHECK(q.rho_centering <= 1e-6);
    CHECK(q.rho_marginal <= 1e-8);
    CHECK(q.fourier_modes == 4);
    CHECK(q.hermite_degree == 2);
  }

  TEST_CASE("regime (1,1) at low quadrature order") {
    const Membrane m(ModelParams{1, 1, 1});
    Regime11Options o;
    o.eta_order = 2;
    o.compute_L = false;
    const HomogenizedQuantities q = regime11_quantities(m, o);
    CHECK(q.solver_residual <= 1e-8);
    CHECK(q.A_form_defect <= 1e-12);
    CHECK(test::max_abs(q.A_strato) <= 1e-12);
    CHECK(test::max_abs(q.A_strato_alt) <= 1e-12);
    CHECK(test::max_abs(antisym(q.A_ito) - antisym(q.A_strato)) <= 1e-12);
    CHECK(test::max_abs(q.D - q.D.transpose()) < 1e-14);
    CHECK_FALSE(q.L.has_value());
  }

  TEST_CASE("monte-carlo estimators on synthetic summaries") {
    std::vector<PathSummary> s;
    RandomStream r(64, 0, kStreamAux);
    for (int i = 0; i < 4000; ++i) {
      PathSummary p;
      p.dx = Vec2(std::sqrt(2.0) * r.normal(), std::sqrt(2.0) * r.normal());
      s.push_back(p);
    }
    const MatEstimate D = mc_estimate_D(s, 1.0);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) CHECK(std::abs(D.value(i, j) - (i == j)) <= 3 * D.se(i, j));
    // Stratonovich area of a straight segment is dx dx^T / 2, so A~ = 0 up to the covariance correction.
    for (PathSummary& p : s) p.strato = 0.5 * p.dx * p.dx.transpose();
    const MatEstimate A = mc_estimate_area(s, 1.0, Flavor::Stratonovich, Vec2::Zero());
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) CHECK(std::abs(A.value(i, j)) <= 3 * A.se(i, j));
    // Exactly (m m^T - S/n) / 2 for the sample mean m and unbiased covariance S.
    Vec2 mean = Vec2::Zero();
    for (const PathSummary& p : s) mean += p.dx;
    mean /= double(s.size());
    Mat2 S = Mat2::Zero();
    for (const PathSummary& p : s) S += (p.dx - mean) * (p.dx - mean).transpose();
    S /= double(s.size() - 1);
    CHECK(test::max_abs(A.value - 0.5 * (mean * mean.transpose() - S / double(s.size()))) < 1e-15);
    const PathSummary seg = summarize_path(two_point(Vec2(0, 0), Vec2(1, 2)));
    CHECK(test::max_abs(seg.strato - 0.5 * Vec2(1, 2) * Vec2(1, 2).transpose()) < 1e-15);
    CHECK(test::max_abs(seg.ito) < 1e-15);
  }

  TEST_CASE("convergence rows on a flat membrane") {
    const Membrane m(ModelParams{1, 1, 0});
    HomogenizedQuantities ref;
    TableConfig tc;
    tc.epsilons = {0.5, 0.25};
    tc.dt = 1e-2;
    tc.n_paths = 2000;
    tc.holder_gamma = 0.4;
    const auto rows = convergence_table(m, tc, ref);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].epsilon > rows[1].epsilon);
    for (const ConvergenceRow& row : rows) {
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
          CHECK(std::abs(row.D.value(i, j) - (i == j)) <= 3 * row.D.se(i, j));
          CHECK(std::abs(row.A_ito.value(i, j)) <= 3 * row.A_ito.se(i, j));
          CHECK(std::abs(row.A_strato.value(i, j)) <= 3 * row.A_strato.se(i, j));
        }
      CHECK(std::isfinite(row.holder_p4.mean));
      CHECK(row.holder_p4.mean > 0.0);
      const MeanSE e = d_error(row);
      CHECK(e.mean <= 3 * e.se + 1e-15);
    }
    CHECK(epsilon_seed(1, 0.5) != epsilon_seed(1, 0.25));
    CHECK(epsilon_seed(1, 0.5) == epsilon_seed(1, 0.5));
    std::ostringstream os;
    write_table_csv(rows, os);
    const std::string csv = os.str();
    CHECK(csv.rfind("epsilon,n_paths,D11,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  }
}
