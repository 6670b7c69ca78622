#include "helfrich/homogenize.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "helfrich/hermite.hpp"
#include "helfrich/rng.hpp"
#include "helfrich/util.hpp"

namespace helfrich {

const char* source_name(QuantitySource s) { return s == QuantitySource::Spectral ? "spectral" : "monte_carlo"; }

namespace {

TensorRule checked_rule(int K, int order) {
  if (order < 1) throw std::invalid_argument("quadrature order must be positive");
  if (std::pow(double(order), K) > 2e6)
    throw std::invalid_argument("tensor Gauss-Hermite rule too large for this mode set; use the Monte-Carlo average");
  return tensor_gauss_hermite(K, order);
}

SurfaceState scaled_node(const TensorRule& rule, const Eigen::VectorXd& sd, int n) {
  if (rule.dim == 0) return SurfaceState();
  return sd.cwiseProduct(rule.nodes.col(n));
}

}  // namespace

AveragedCoefficients averaged_coefficients(const Membrane& membrane, const Vec2& x, int order) {
  AveragedCoefficients a;
  a.Sigma_bar.setZero();
  const int K = membrane.dim();
  const TensorRule rule = checked_rule(K, order);
  const Eigen::VectorXd sd = membrane.spectra().var_per_coord(membrane.modes()).cwiseSqrt();
  for (int n = 0; n < rule.size(); ++n) {
    const SurfaceState eta = scaled_node(rule, sd, n);
    const LocalGeometry g = K ? membrane.local(x, eta) : LocalGeometry{};
    a.F_bar += rule.weights[n] * g.drift;
    a.Sigma_bar += rule.weights[n] * g.sigma;
  }
  return a;
}

AveragedCoefficients averaged_coefficients_mc(const Membrane& membrane, const Vec2& x, long n_samples,
                                              std::uint64_t seed) {
  if (n_samples < 2) throw std::invalid_argument("need at least two samples");
  AveragedCoefficients a;
  Vec2 sF = Vec2::Zero(), sFF = Vec2::Zero();
  Mat2 sS = Mat2::Zero(), sSS = Mat2::Zero();
  for (long i = 0; i < n_samples; ++i) {
    RandomStream rng(seed, static_cast<std::uint64_t>(i), kStreamAux);
    const SurfaceState eta = sample_stationary(membrane.modes(), membrane.spectra(), rng);
    const LocalGeometry g = membrane.dim() ? membrane.local(x, eta) : LocalGeometry{};
    sF += g.drift;
    sFF += g.drift.cwiseProduct(g.drift);
    sS += g.sigma;
    sSS += g.sigma.cwiseProduct(g.sigma);
  }
  const double n = double(n_samples);
  a.F_bar = sF / n;
  a.Sigma_bar = sS / n;
  const Vec2 vF = ((sFF / n - a.F_bar.cwiseProduct(a.F_bar)) * n / (n - 1.0)).cwiseMax(0.0);
  const Mat2 vS = ((sSS / n - a.Sigma_bar.cwiseProduct(a.Sigma_bar)) * n / (n - 1.0)).cwiseMax(0.0);
  a.F_se = (vF / n).cwiseSqrt();
  a.Sigma_se = (vS / n).cwiseSqrt();
  return a;
}

HomogenizedQuantities averaging_quantities(const Membrane& membrane, int order, int x_points) {
  HomogenizedQuantities q;
  q.regime = ScalingRegime::averaging();
  q.D.setZero();
  Vec2 L = Vec2::Zero();
  std::vector<Mat2> per_x;
  for (int j = 0; j < x_points; ++j)
    for (int i = 0; i < x_points; ++i) {
      const AveragedCoefficients a =
          averaged_coefficients(membrane, Vec2(double(i) / x_points, double(j) / x_points), order);
      per_x.push_back(a.Sigma_bar);
      q.D += a.Sigma_bar;
      L += a.F_bar;
    }
  const double n = double(x_points) * x_points;
  q.D /= n;
  q.L = L / n;
  // Spread of Sigma_bar over x (zero under phase invariance).
  double spread = 0.0;
  for (const Mat2& m : per_x) spread = std::max(spread, (m - q.D).cwiseAbs().maxCoeff());
  q.eta_quadrature_change = (averaged_coefficients(membrane, Vec2(0.3, 0.7), order).Sigma_bar -
                             averaged_coefficients(membrane, Vec2(0.3, 0.7), std::max(1, order - 2)).Sigma_bar)
                                .cwiseAbs()
                                .maxCoeff();
  q.centering_residual = spread;
  q.eta_order = order;
  return q;
}

namespace {

struct Moments12 {
  Mat2 sig = Mat2::Zero(), cross = Mat2::Zero(), dir = Mat2::Zero(), eta = Mat2::Zero();
  Mat2 chiF = Mat2::Zero(), chiG = Mat2::Zero();
  void add(const Moments12& o) {
    sig += o.sig;
    cross += o.cross;
    dir += o.dir;
    eta += o.eta;
    chiF += o.chiF;
    chiG += o.chiG;
  }
};

inline double wmean(const RMat& a, const RMat& b, const RMat& w) { return a.cwiseProduct(b).cwiseProduct(w).mean(); }

}  // namespace

HomogenizedQuantities regime12_quantities(const PoissonSolution& chi, const InvariantDensity& rho,
                                          const HermiteFourierBasis& basis, int workers) {
  if (chi.M != basis.M() || chi.hermite_degree != basis.degree() || rho.M != basis.M() ||
      rho.hermite_degree != basis.degree() || rho.kind != InvariantDensity::Kind::GalerkinGEta)
    throw std::invalid_argument("basis mismatch between cell solution, density and quadrature");
  const int nF = basis.n_fourier(), nH = basis.n_hermite(), K = basis.membrane().dim();
  const FourierGrid& grid = basis.grid();
  const JointGenerator G(basis);
  const CMat g = Eigen::Map<const CMat>(rho.coeffs.data(), nF, nH);
  std::array<CMat, 2> X, LX;
  std::array<std::vector<CMat>, 2> dX;
  const Eigen::VectorXd gv = basis.membrane().spectra().rate_per_coord(basis.membrane().modes()).cwiseProduct(
      basis.membrane().spectra().var_per_coord(basis.membrane().modes()));
  for (int i = 0; i < 2; ++i) {
    X[i] = Eigen::Map<const CMat>(chi.coeffs.col(i).data(), nF, nH);
    LX[i] = X[i] * basis.eta_eigenvalues().cast<cplx>().asDiagonal();
    for (int c = 0; c < K; ++c) dX[i].push_back(basis.eta_derivative(X[i], c));
  }

  constexpr int kChunk = 64;
  const int nN = basis.n_nodes(), n_chunks = (nN + kChunk - 1) / kChunk;
  std::vector<Moments12> partial(n_chunks);
  parallel_for(n_chunks, workers, [&](long ch) {
    Moments12& m = partial[ch];
    for (int n = int(ch) * kChunk; n < std::min(nN, int(ch + 1) * kChunk); ++n) {
      const double w = basis.quadrature().weights[n];
      const NodeGeometry geo = G.node_geometry(n);
      const FrozenFields ff{geo.F1, geo.F2, geo.S11, geo.S12, geo.S22, geo.sqrtg};
      const RMat gn = grid.synthesize(basis.at_node(g, n));
      std::array<RMat, 2> u, u1, u2, Gu;
      std::array<std::vector<RMat>, 2> ue;
      for (int i = 0; i < 2; ++i) {
        const CMat Cn = basis.at_node(X[i], n);
        u[i] = grid.synthesize(Cn);
        u1[i] = grid.synthesize(grid.diff(Cn, 0));
        u2[i] = grid.synthesize(grid.diff(Cn, 1));
        Gu[i] = apply_L0_pointwise(ff, grid, Cn) + grid.synthesize(basis.at_node(LX[i], n));
        for (int c = 0; c < K; ++c) ue[i].push_back(grid.synthesize(basis.at_node(dX[i][c], n)));
      }
      const std::array<const RMat*, 2> F{&geo.F1, &geo.F2};
      // (Sigma grad chi^j)_i
      auto sgrad = [&](int i, int j) -> RMat {
        return i == 0 ? RMat(geo.S11.cwiseProduct(u1[j]) + geo.S12.cwiseProduct(u2[j]))
                      : RMat(geo.S12.cwiseProduct(u1[j]) + geo.S22.cwiseProduct(u2[j]));
      };
      const RMat ones = RMat::Ones(grid.N(), grid.N());
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
          const RMat& Sij = (i == 0 && j == 0) ? geo.S11 : (i == 1 && j == 1) ? geo.S22 : geo.S12;
          m.sig(i, j) += w * wmean(Sij, ones, gn);
          const RMat sg = sgrad(i, j);
          m.cross(i, j) += w * wmean(sg, ones, gn);
          m.dir(i, j) += w * wmean(u1[i], sgrad(0, j), gn) + w * wmean(u2[i], sgrad(1, j), gn);
          double e = 0.0;
          for (int c = 0; c < K; ++c) e += gv[c] * wmean(ue[i][c], ue[j][c], gn);
          m.eta(i, j) += w * e;
          m.chiF(i, j) += w * wmean(u[i], *F[j], gn);
          m.chiG(i, j) += w * wmean(u[i], Gu[j], gn);
        }
    }
  });
  Moments12 tot;
  for (const auto& p : partial) tot.add(p);

  HomogenizedQuantities q;
  q.regime = ScalingRegime::hom12();
  q.D = tot.sig + tot.cross + tot.cross.transpose() + tot.dir + tot.eta;
  q.D_bracket = tot.sig + tot.cross + tot.cross.transpose() + 0.5 * (tot.chiF + tot.chiF.transpose());
  q.A_ito = tot.chiG + 2.0 * q.D - 2.0 * (tot.sig + tot.cross.transpose());
  q.A_strato = 0.5 * (tot.chiG - tot.chiG.transpose()) + tot.cross - tot.cross.transpose();
  q.A_strato_alt = q.A_ito - q.D + tot.sig;
  q.A_form_defect = (q.A_strato - q.A_strato_alt).cwiseAbs().maxCoeff();
  q.solver_residual = chi.solver_residual;
  q.centering_residual = chi.centering_residual;
  q.truncation_residual = chi.truncation_residual;
  q.status = chi.converged ? "ok" : chi.status;
  q.fourier_modes = basis.M();
  q.hermite_degree = basis.degree();
  q.eta_order = int(std::lround(std::pow(double(basis.n_nodes()), 1.0 / std::max(1, K))));
  return q;
}

namespace {

struct Moments11 {
  Mat2 D = Mat2::Zero(), sig = Mat2::Zero(), cross = Mat2::Zero(), chiL0 = Mat2::Zero(), chiF = Mat2::Zero();
  Vec2 L = Vec2::Zero();
  double pointwise = 0.0;
  double residual = 0.0;
  double centering = 0.0;
  int M = 0;
  bool converged = true;
};

// Per-eta integrals against rho_Y(., eta). The Fourier order is raised in steps of 2
// per node until the nodal residual meets the tolerance; stencil solves reuse it.
Moments11 frozen_moments(const Membrane& membrane, const SurfaceState& eta, const Regime11Options& opt,
                         double tol) {
  Moments11 m;
  int M = std::max(1, opt.cell.M0);
  FrozenCellSolver solver(membrane, eta, FourierGrid(M));
  double prev = -1.0;
  while (solver.solution().solver_residual > tol && M + 2 <= opt.cell.M_max) {
    const double r = solver.solution().solver_residual;
    int step = 2;
    // Geometric decay observed over the last step predicts the jump.
    if (prev > r && r > 0.0) {
      const double steps = std::ceil(std::log(tol / r) / std::log(r / prev));
      step = 2 * std::clamp(int(steps), 1, 4);
    }
    prev = r;
    M = std::min(M + step, opt.cell.M_max);
    solver = FrozenCellSolver(membrane, eta, FourierGrid(M));
  }
  const PoissonSolution& sol = solver.solution();
  const FourierGrid grid(M);
  m.M = M;
  m.residual = sol.solver_residual;
  m.centering = sol.centering_residual;
  m.converged = sol.solver_residual <= tol;
  const FrozenFields ff = frozen_fields(membrane, eta, grid);
  const RMat rho = rho_Y_grid(membrane, eta, grid);
  std::array<RMat, 2> u, u1, u2, L0u;
  for (int i = 0; i < 2; ++i) {
    const CMat C = sol.component(i);
    u[i] = grid.synthesize(C);
    u1[i] = grid.synthesize(grid.diff(C, 0));
    u2[i] = grid.synthesize(grid.diff(C, 1));
    L0u[i] = apply_L0_pointwise(ff, grid, C);
  }
  const std::array<const RMat*, 2> F{&ff.F1, &ff.F2};
  auto S = [&](int i, int j) -> const RMat& { return (i == 0 && j == 0) ? ff.S11 : (i == 1 && j == 1) ? ff.S22 : ff.S12; };
  const RMat ones = RMat::Ones(grid.N(), grid.N());
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      // (e_i + grad chi^i) Sigma (e_j + grad chi^j) = sum_ab (delta_ia + d_a chi^i) S_ab (delta_jb + d_b chi^j)
      RMat acc = RMat::Zero(grid.N(), grid.N());
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          const RMat va = (a == 0 ? u1[i] : u2[i]) + (a == i ? ones : RMat::Zero(grid.N(), grid.N()));
          const RMat vb = (b == 0 ? u1[j] : u2[j]) + (b == j ? ones : RMat::Zero(grid.N(), grid.N()));
          acc += va.cwiseProduct(S(a, b)).cwiseProduct(vb);
        }
      m.D(i, j) = wmean(acc, ones, rho);
      m.sig(i, j) = wmean(S(i, j), ones, rho);
      const RMat sg = S(i, 0).cwiseProduct(u1[j]) + S(i, 1).cwiseProduct(u2[j]);
      m.cross(i, j) = wmean(sg, ones, rho);
      m.chiL0(i, j) = wmean(u[i], L0u[j], rho);
      m.chiF(i, j) = wmean(u[i], *F[j], rho);
    }
  const Mat2 a1 = m.cross - m.cross.transpose(), a2 = m.chiF - m.chiF.transpose();
  m.pointwise = std::max(a1.cwiseAbs().maxCoeff(), a2.cwiseAbs().maxCoeff());

  if (opt.compute_L && membrane.dim() > 0) {
    // L_eta chi by a central stencil in each eta coordinate, all solves on the same grid.
    const Eigen::VectorXd rate = membrane.spectra().rate_per_coord(membrane.modes());
    const Eigen::VectorXd var = membrane.spectra().var_per_coord(membrane.modes());
    CMat Lc = CMat::Zero(sol.coeffs.rows(), 2);
    for (int c = 0; c < membrane.dim(); ++c) {
      const double h = 1e-3 * std::sqrt(2.0 * var[c]);
      SurfaceState ep = eta, em = eta;
      ep[c] += h;
      em[c] -= h;
      const PoissonSolution sp = solver.solve_nearby(ep);
      const PoissonSolution sm = solver.solve_nearby(em);
      Lc += -rate[c] * eta[c] * (sp.coeffs - sm.coeffs) / (2.0 * h) +
            rate[c] * var[c] * (sp.coeffs - 2.0 * sol.coeffs + sm.coeffs) / (h * h);
    }
    for (int i = 0; i < 2; ++i) {
      const int w = grid.width();
      const CMat C = Eigen::Map<const CMat>(Lc.col(i).data(), w, w);
      m.L[i] = wmean(grid.synthesize(C), ones, rho);
    }
  }
  return m;
}

struct Regime11Sum {
  Moments11 tot;
  double residual = 0.0, centering = 0.0, pointwise = 0.0;
  int M = 0;
  bool converged = true;
};

Regime11Sum regime11_sum(const Membrane& membrane, int order, const Regime11Options& opt,
                         bool with_L) {
  const int K = membrane.dim();
  const TensorRule rule = checked_rule(K, order);
  const Eigen::VectorXd sd = membrane.spectra().var_per_coord(membrane.modes()).cwiseSqrt();
  Regime11Options o = opt;
  o.compute_L = with_L;
  // Nodal cell tolerance relaxed by the node's quadrature weight relative to the largest,
  // capped at 1e-4: far-tail nodes need very high Fourier orders and barely contribute.
  const double wmax = rule.weights.maxCoeff();
  auto node_tol = [&](int n) { return std::min(1e-4, opt.cell.tol * wmax / rule.weights[n]); };
  // F and Sigma are even in eta (h -> -h), so the cell problem and every moment at -eta
  // equal those at eta; mirrored nodes reuse their partner's solve.
  std::vector<int> rep(rule.size());
  for (int n = 0; n < rule.size(); ++n) {
    rep[n] = n;
    const auto x = rule.nodes.col(n);
    int lead = 0;
    while (lead < K && std::abs(x[lead]) < 1e-12) ++lead;
    if (lead == K || x[lead] > 0.0) continue;
    for (int m = 0; m < rule.size(); ++m)
      if ((rule.nodes.col(m) + x).cwiseAbs().maxCoeff() < 1e-10) {
        rep[n] = m;
        break;
      }
  }
  std::vector<int> todo;
  for (int n = 0; n < rule.size(); ++n)
    if (rep[n] == n) todo.push_back(n);
  std::vector<Moments11> per(rule.size());
  parallel_for(long(todo.size()), opt.workers, [&](long i) {
    const int n = todo[i];
    per[n] = frozen_moments(membrane, scaled_node(rule, sd, n), o, std::max(opt.cell.tol, node_tol(n)));
  });
  Regime11Sum s;
  for (int n = 0; n < rule.size(); ++n) {
    const double w = rule.weights[n];
    const Moments11& m = per[rep[n]];
    s.tot.D += w * m.D;
    s.tot.sig += w * m.sig;
    s.tot.cross += w * m.cross;
    s.tot.chiL0 += w * m.chiL0;
    s.tot.chiF += w * m.chiF;
    s.tot.L += w * m.L;
    s.residual = std::max(s.residual, m.residual * w / wmax);
    s.centering = std::max(s.centering, m.centering);
    s.pointwise = std::max(s.pointwise, m.pointwise);
    s.M = std::max(s.M, m.M);
    s.converged = s.converged && m.converged;
  }
  return s;
}

}  // namespace

HomogenizedQuantities regime11_quantities(const Membrane& membrane, const Regime11Options& opt) {
  HomogenizedQuantities q;
  q.regime = ScalingRegime::hom11();
  const int K = membrane.dim();
  const bool L_here = opt.compute_L && opt.L_order == opt.eta_order;
  const Regime11Sum s = regime11_sum(membrane, opt.eta_order, opt, L_here);
  q.fourier_modes = s.M;
  q.eta_order = opt.eta_order;
  q.D = s.tot.D;
  bool converged = s.converged;
  if (L_here) {
    q.L = s.tot.L;
  } else if (opt.compute_L) {
    const Regime11Sum l = regime11_sum(membrane, opt.L_order, opt, true);
    q.L = l.tot.L;
    converged = converged && l.converged;
  }
  q.A_ito = s.tot.chiL0 + 2.0 * q.D - 2.0 * (s.tot.sig + s.tot.cross.transpose());
  q.A_strato = s.tot.cross - s.tot.cross.transpose();
  q.A_strato_alt = s.tot.chiF - s.tot.chiF.transpose();
  q.A_strato_pointwise = s.pointwise;
  q.A_form_defect = (q.A_strato - (q.A_ito - q.D + s.tot.sig)).cwiseAbs().maxCoeff();
  q.solver_residual = s.residual;
  q.centering_residual = s.centering;
  if (K > 0 && opt.eta_order > 2) {
    const Regime11Sum c = regime11_sum(membrane, opt.eta_order - 2, opt, false);
    q.eta_quadrature_change = (c.tot.D - q.D).cwiseAbs().maxCoeff();
  }
  if (!converged)
    q.status = "failed: cell residual above tolerance";
  else if (q.eta_quadrature_change > opt.eta_tol)
    q.status = "failed: quadrature order insufficient";
  return q;
}

SpectralBundle spectral_quantities(const Membrane& membrane, const ScalingRegime& regime, const SpectralOptions& opt) {
  regime.validate();
  SpectralBundle b;
  if (regime == ScalingRegime::averaging()) {
    b.q = averaging_quantities(membrane, std::max(10, opt.eta_order));
  } else if (regime == ScalingRegime::hom11()) {
    Regime11Options o;
    o.eta_order = opt.eta_order;
    o.workers = opt.workers;
    b.q = regime11_quantities(membrane, o);
  } else {
    JointSolveOptions jo;
    jo.tol = opt.tol;
    jo.workers = opt.workers;
    b.basis.emplace(membrane, opt.fourier_modes, opt.hermite_degree);
    b.rho = solve_invariant_density(*b.basis, jo);
    b.chi = solve_chi_12(*b.basis, *b.rho, jo);
    b.q = regime12_quantities(*b.chi, *b.rho, *b.basis, opt.workers);
    const JointGenerator G(*b.basis);
    const CMat g = Eigen::Map<const CMat>(b.rho->coeffs.data(), b.basis->n_fourier(), b.basis->n_hermite());
    Vec2 meanF = Vec2::Zero();
    for (int n = 0; n < b.basis->n_nodes(); ++n) {
      const NodeGeometry geo = G.node_geometry(n);
      const RMat gn = b.basis->grid().synthesize(b.basis->at_node(g, n));
      const double w = b.basis->quadrature().weights[n];
      meanF += w * Vec2(geo.F1.cwiseProduct(gn).mean(), geo.F2.cwiseProduct(gn).mean());
    }
    b.q.rho_centering = meanF.cwiseAbs().maxCoeff();
    b.q.rho_marginal = eta_marginal_defect(*b.basis, *b.rho);
  }
  return b;
}

PathSummary summarize_path(const PathSample& path, double holder_gamma) {
  PathSummary s;
  const long n = path.n_steps();
  s.dx = path.x[n] - path.x[0];
  const std::vector<GridPair> full{{0, n}};
  s.ito = RoughPathLift(path, Flavor::Ito, full).second_level()[0];
  s.strato = RoughPathLift(path, Flavor::Stratonovich, full).second_level()[0];
  if (holder_gamma > 0.0) s.holder_x = holder_norms(ito_lift(path, dyadic_pairs(n)), holder_gamma).norm_x;
  return s;
}

namespace {

int batch_count(size_t n, int requested) { return std::max(1, std::min<int>(requested, int(n / 2))); }

// Batch-means standard error of a per-replica 2x2 statistic.
Mat2 batch_se(const std::vector<Mat2>& z, int n_batches) {
  const int nb = batch_count(z.size(), n_batches);
  if (nb < 2) return Mat2::Constant(std::numeric_limits<double>::infinity());
  const size_t per = z.size() / nb;
  std::vector<Mat2> bm(nb, Mat2::Zero());
  for (int b = 0; b < nb; ++b) {
    for (size_t r = b * per; r < (b + 1) * per; ++r) bm[b] += z[r];
    bm[b] /= double(per);
  }
  Mat2 mean = Mat2::Zero();
  for (const Mat2& m : bm) mean += m;
  mean /= nb;
  Mat2 var = Mat2::Zero();
  for (const Mat2& m : bm) var += (m - mean).cwiseProduct(m - mean);
  var /= double(nb - 1);
  return (var / nb).cwiseSqrt();
}

Vec2 mean_dx(const std::vector<PathSummary>& s) {
  Vec2 m = Vec2::Zero();
  for (const auto& p : s) m += p.dx;
  return m / double(s.size());
}

}  // namespace

MatEstimate mc_estimate_D(const std::vector<PathSummary>& s, double T, int n_batches) {
  if (s.size() < 2) throw std::invalid_argument("need at least two replicas");
  MatEstimate e;
  const Vec2 m = mean_dx(s);
  Mat2 C = Mat2::Zero();
  for (const auto& p : s) C += (p.dx - m) * (p.dx - m).transpose();
  e.value = C / (double(s.size() - 1) * 2.0 * T);
  // Batch estimates of the covariance.
  const int nb = batch_count(s.size(), n_batches);
  const size_t per = s.size() / nb;
  std::vector<Mat2> est;
  for (int b = 0; b < nb; ++b) {
    Vec2 mb = Vec2::Zero();
    for (size_t r = b * per; r < (b + 1) * per; ++r) mb += s[r].dx;
    mb /= double(per);
    Mat2 Cb = Mat2::Zero();
    for (size_t r = b * per; r < (b + 1) * per; ++r) Cb += (s[r].dx - mb) * (s[r].dx - mb).transpose();
    est.push_back(Cb / (double(per - 1) * 2.0 * T));
  }
  // batch_se on batch estimates with one estimate per "batch".
  Mat2 mean = Mat2::Zero();
  for (const Mat2& x : est) mean += x;
  mean /= nb;
  Mat2 var = Mat2::Zero();
  for (const Mat2& x : est) var += (x - mean).cwiseProduct(x - mean);
  e.se = nb > 1 ? Mat2((var / double(nb - 1) / nb).cwiseSqrt()) : Mat2::Constant(std::numeric_limits<double>::infinity());
  return e;
}

namespace {

// Stratonovich area estimator from replica sums: mean z + (m m^T + C (1/n - 1/(n-1))) / (2T)
// with z = X~/T - dx dx^T / (2T) and C the centered scatter of dx.
Mat2 strato_from_sums(const Mat2& Sz, const Vec2& Sx, const Mat2& Sxx, double n, double T) {
  const Vec2 m = Sx / n;
  const Mat2 C = Sxx - n * m * m.transpose();
  return Sz / n + (m * m.transpose() + C * (1.0 / n - 1.0 / (n - 1.0))) / (2.0 * T);
}

}  // namespace

MatEstimate mc_estimate_area(const std::vector<PathSummary>& s, double T, Flavor flavor, const Vec2& L,
                             int n_batches) {
  if (s.size() < 2) throw std::invalid_argument("need at least two replicas");
  MatEstimate e;
  if (flavor == Flavor::Ito) {
    std::vector<Mat2> z;
    z.reserve(s.size());
    for (const auto& p : s) z.push_back(p.ito / T);
    for (const Mat2& m : z) e.value += m;
    e.value /= double(z.size());
    e.se = batch_se(z, n_batches);
  } else {
    // Delete-one-batch jackknife: the covariance correction is nonlinear in the replicas.
    const int nb = batch_count(s.size(), n_batches);
    const size_t per = s.size() / nb;
    std::vector<Mat2> bz(nb, Mat2::Zero()), bxx(nb, Mat2::Zero());
    std::vector<Vec2> bx(nb, Vec2::Zero());
    std::vector<double> bn(nb, 0.0);
    for (size_t r = 0; r < s.size(); ++r) {
      const int b = std::min<int>(int(r / per), nb - 1);
      const PathSummary& p = s[r];
      bz[b] += p.strato / T - p.dx * p.dx.transpose() / (2.0 * T);
      bx[b] += p.dx;
      bxx[b] += p.dx * p.dx.transpose();
      bn[b] += 1.0;
    }
    Mat2 Sz = Mat2::Zero(), Sxx = Mat2::Zero();
    Vec2 Sx = Vec2::Zero();
    double n = 0.0;
    for (int b = 0; b < nb; ++b) {
      Sz += bz[b];
      Sx += bx[b];
      Sxx += bxx[b];
      n += bn[b];
    }
    e.value = strato_from_sums(Sz, Sx, Sxx, n, T);
    if (nb < 2 || n - per < 2) {
      e.se = Mat2::Constant(std::numeric_limits<double>::infinity());
    } else {
      std::vector<Mat2> loo(nb);
      Mat2 mean = Mat2::Zero();
      for (int b = 0; b < nb; ++b) {
        loo[b] = strato_from_sums(Sz - bz[b], Sx - bx[b], Sxx - bxx[b], n - bn[b], T);
        mean += loo[b];
      }
      mean /= nb;
      Mat2 var = Mat2::Zero();
      for (const Mat2& m : loo) var += (m - mean).cwiseProduct(m - mean);
      // The jackknife linearizes m m^T, which is degenerate at zero mean; add the
      // second-order Gaussian term Var(m_i m_j) = (S_ii S_jj + S_ij^2) / n^2.
      const Vec2 m = Sx / n;
      const Mat2 S = (Sxx - n * m * m.transpose()) / (n - 1.0);
      Mat2 second;
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) second(i, j) = (S(i, i) * S(j, j) + S(i, j) * S(i, j)) / (4.0 * T * T * n * n);
      e.se = (var * (double(nb - 1) / nb) + second).cwiseSqrt();
    }
  }
  e.value -= L * L.transpose() * T / 2.0;
  return e;
}

std::uint64_t epsilon_seed(std::uint64_t master_seed, double epsilon) {
  return mix64(master_seed ^ mix64(std::bit_cast<std::uint64_t>(epsilon)));
}

ConvergenceRow convergence_row(const Membrane& membrane, const TableConfig& cfg, double epsilon,
                               const HomogenizedQuantities& ref, const std::optional<StartDensity>& start) {
  const auto t0 = std::chrono::steady_clock::now();
  SimConfig sc;
  sc.regime = cfg.regime;
  sc.epsilon = epsilon;
  sc.horizon = cfg.horizon;
  const double dmax = cfg.dt > 0.0 ? cfg.dt : dt_max(cfg.regime, epsilon, cfg.horizon);
  sc.dt = cfg.horizon / std::ceil(cfg.horizon / dmax - 1e-9);
  sc.n_paths = cfg.n_paths;
  sc.master_seed = epsilon_seed(cfg.seed, epsilon);
  const PathSimulator sim(membrane, sc, start);
  const double gamma = cfg.holder_gamma;
  const std::vector<PathSummary> s =
      batch_map<PathSummary>(sim, [gamma](PathSample&& p) { return summarize_path(p, gamma); }, cfg.workers);
  ConvergenceRow row;
  row.epsilon = epsilon;
  row.n_paths = cfg.n_paths;
  const Vec2 L = ref.L.value_or(Vec2::Zero());
  row.D = mc_estimate_D(s, cfg.horizon);
  row.A_ito = mc_estimate_area(s, cfg.horizon, Flavor::Ito, L);
  row.A_strato = mc_estimate_area(s, cfg.horizon, Flavor::Stratonovich, L);
  row.ref_D = ref.D;
  row.ref_A_ito = ref.A_ito;
  row.ref_A_strato = ref.A_strato;
  if (gamma > 0.0) {
    std::vector<double> p4;
    for (const auto& x : s) p4.push_back(std::pow(x.holder_x, 4));
    row.holder_p4 = mean_se(p4);
  }
  row.wall_s = cfg.timing
                   ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
                   : std::numeric_limits<double>::quiet_NaN();
  return row;
}

std::vector<ConvergenceRow> convergence_table(const Membrane& membrane, const TableConfig& cfg,
                                              const HomogenizedQuantities& ref,
                                              const std::optional<StartDensity>& start) {
  std::vector<double> eps = cfg.epsilons;
  if (eps.empty()) throw std::invalid_argument("epsilon list is empty");
  std::sort(eps.begin(), eps.end(), std::greater<>());
  std::vector<ConvergenceRow> rows;
  for (double e : eps) rows.push_back(convergence_row(membrane, cfg, e, ref, start));
  return rows;
}

MeanSE d_error(const ConvergenceRow& row) {
  const Mat2 E = row.D.value - row.ref_D;
  const double e = E.norm();
  if (e == 0.0) return {0.0, row.D.se.norm()};
  return {e, std::sqrt((E.cwiseProduct(row.D.se) / e).squaredNorm())};
}

void write_table_csv(const std::vector<ConvergenceRow>& rows, std::ostream& os) {
  const char* ij[] = {"11", "12", "21", "22"};
  os << "epsilon,n_paths";
  for (const char* p : {"D", "Aito", "Astrato"}) {
    for (const char* e : ij) os << ',' << p << e;
    for (const char* e : ij) os << ',' << p << e << "_se";
  }
  for (const char* p : {"refD", "refAito", "refAstrato"})
    for (const char* e : ij) os << ',' << p << e;
  os << ",holder_p4,holder_p4_se,wall_s\n";
  auto put = [&os](const Mat2& m) {
    os << ',' << fmt_double(m(0, 0)) << ',' << fmt_double(m(0, 1)) << ',' << fmt_double(m(1, 0)) << ','
       << fmt_double(m(1, 1));
  };
  for (const auto& r : rows) {
    os << fmt_double(r.epsilon) << ',' << r.n_paths;
    for (const MatEstimate* m : {&r.D, &r.A_ito, &r.A_strato}) {
      put(m->value);
      put(m->se);
    }
    put(r.ref_D);
    put(r.ref_A_ito);
    put(r.ref_A_strato);
    os << ',' << fmt_double(r.holder_p4.mean) << ',' << fmt_double(r.holder_p4.se) << ','
       << fmt_double(r.wall_s) << '\n';
  }
}

}  // namespace helfrich
