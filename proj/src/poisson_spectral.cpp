#include "helfrich/poisson_spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "helfrich/ou_process.hpp"
#include "helfrich/rng.hpp"
#include "helfrich/sde_sim.hpp"
#include "helfrich/stats.hpp"
#include "helfrich/util.hpp"

namespace helfrich {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

FrozenFields frozen_fields(const Membrane& membrane, const SurfaceState& eta, const FourierGrid& grid) {
  const int N = grid.N();
  FrozenFields f;
  for (RMat* m : {&f.F1, &f.F2, &f.S11, &f.S12, &f.S22, &f.sqrtg}) m->resize(N, N);
  for (int j = 0; j < N; ++j)
    for (int i = 0; i < N; ++i) {
      const LocalGeometry g = membrane.dim() ? membrane.local(grid.point(i, j), eta) : LocalGeometry{};
      f.F1(i, j) = g.drift[0];
      f.F2(i, j) = g.drift[1];
      f.S11(i, j) = g.sigma(0, 0);
      f.S12(i, j) = g.sigma(0, 1);
      f.S22(i, j) = g.sigma(1, 1);
      f.sqrtg(i, j) = std::sqrt(g.det_g);
    }
  return f;
}

CMat assemble_L0(const Membrane& membrane, const SurfaceState& eta, const FourierGrid& grid, const RMat* weight) {
  const FrozenFields ff = frozen_fields(membrane, eta, grid);
  auto wt = [&](const RMat& m) -> RMat { return weight ? RMat(m.cwiseProduct(*weight)) : m; };
  const CMat f1 = grid.analyze_full(wt(ff.F1)), f2 = grid.analyze_full(wt(ff.F2));
  const CMat s11 = grid.analyze_full(wt(ff.S11)), s12 = grid.analyze_full(wt(ff.S12));
  const CMat s22 = grid.analyze_full(wt(ff.S22));
  const int n = grid.n_modes(), H = (grid.N() - 1) / 2;
  CMat A(n, n);
  for (int q = 0; q < n; ++q) {
    const auto mq = grid.mode(q);
    const double q1 = kTwoPi * mq[0], q2 = kTwoPi * mq[1];
    for (int p = 0; p < n; ++p) {
      const auto mp = grid.mode(p);
      const int d1 = mp[0] - mq[0] + H, d2 = mp[1] - mq[1] + H;
      A(p, q) = cplx(0.0, 1.0) * (q1 * f1(d1, d2) + q2 * f2(d1, d2)) -
                (q1 * q1 * s11(d1, d2) + 2.0 * q1 * q2 * s12(d1, d2) + q2 * q2 * s22(d1, d2));
    }
  }
  return A;
}

CMat gram_matrix(const FourierGrid& grid, const RMat& weight) {
  const CMat w = grid.analyze_full(weight);
  const int n = grid.n_modes(), H = (grid.N() - 1) / 2;
  CMat W(n, n);
  for (int q = 0; q < n; ++q)
    for (int p = 0; p < n; ++p) {
      const auto mp = grid.mode(p), mq = grid.mode(q);
      W(p, q) = w(mp[0] - mq[0] + H, mp[1] - mq[1] + H);
    }
  return W;
}

RMat apply_L0_pointwise(const FrozenFields& ff, const FourierGrid& grid, const CMat& f) {
  const RMat f1 = grid.synthesize(grid.diff(f, 0)), f2 = grid.synthesize(grid.diff(f, 1));
  const RMat f11 = grid.synthesize(grid.diff2(f, 0, 0)), f12 = grid.synthesize(grid.diff2(f, 0, 1));
  const RMat f22 = grid.synthesize(grid.diff2(f, 1, 1));
  return ff.F1.cwiseProduct(f1) + ff.F2.cwiseProduct(f2) + ff.S11.cwiseProduct(f11) +
         2.0 * ff.S12.cwiseProduct(f12) + ff.S22.cwiseProduct(f22);
}

CMat PoissonSolution::component(int i) const {
  const int w = 2 * M + 1;
  return Eigen::Map<const CMat>(coeffs.col(i).data(), w, w);
}

RMat rho_Y_grid(const Membrane& membrane, const SurfaceState& eta, const FourierGrid& grid) {
  RMat r(grid.N(), grid.N());
  for (int j = 0; j < grid.N(); ++j)
    for (int i = 0; i < grid.N(); ++i)
      r(i, j) = membrane.dim() ? std::sqrt(membrane.det_g(grid.point(i, j), eta)) : 1.0;
  return r / r.mean();
}

InvariantDensity rho_Y_density(const Membrane& membrane, const SurfaceState& eta, const FourierGrid& grid) {
  InvariantDensity d;
  d.kind = InvariantDensity::Kind::ExplicitRhoY;
  d.eta = eta;
  RMat r(grid.N(), grid.N());
  for (int j = 0; j < grid.N(); ++j)
    for (int i = 0; i < grid.N(); ++i)
      r(i, j) = membrane.dim() ? std::sqrt(membrane.det_g(grid.point(i, j), eta)) : 1.0;
  d.normalization = r.mean();
  d.min_value = r.minCoeff() / d.normalization;
  return d;
}

namespace {

void recenter(const FourierGrid& grid, const RMat& rho, PoissonSolution& sol) {
  const int zero = grid.mode_index(0, 0);
  double worst = 0.0;
  for (int c = 0; c < sol.coeffs.cols(); ++c) {
    const RMat v = grid.synthesize(sol.component(c));
    const double mean = v.cwiseProduct(rho).mean();
    sol.coeffs(zero, c) -= mean;
    const RMat v2 = grid.synthesize(sol.component(c));
    worst = std::max(worst, std::abs(v2.cwiseProduct(rho).mean()));
  }
  sol.centering_residual = worst;
}

}  // namespace

namespace {

// Galerkin system with the constant mode removed from unknowns and equations.
struct ReducedSystem {
  std::vector<int> keep;
  CMat A, rhs;
};

ReducedSystem reduced_system(const Membrane& membrane, const SurfaceState& eta, const FourierGrid& grid,
                             const FrozenFields& ff) {
  ReducedSystem r;
  const int n = grid.n_modes(), zero = grid.mode_index(0, 0);
  const CMat A = assemble_L0(membrane, eta, grid);
  for (int i = 0; i < n; ++i)
    if (i != zero) r.keep.push_back(i);
  const int m = static_cast<int>(r.keep.size());
  r.A.resize(m, m);
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < m; ++i) r.A(i, j) = A(r.keep[i], r.keep[j]);
  r.rhs.resize(m, 2);
  const CVec b1 = grid.matrix_to_flat(grid.analyze(ff.F1)), b2 = grid.matrix_to_flat(grid.analyze(ff.F2));
  for (int i = 0; i < m; ++i) {
    r.rhs(i, 0) = -b1[r.keep[i]];
    r.rhs(i, 1) = -b2[r.keep[i]];
  }
  return r;
}

PoissonSolution finish_solution(const Membrane& membrane, const SurfaceState& eta, const FourierGrid& grid,
                                const FrozenFields& ff, const std::vector<int>& keep, const CMat& x) {
  PoissonSolution sol;
  sol.M = grid.M();
  sol.coeffs = CMat::Zero(grid.n_modes(), 2);
  for (size_t i = 0; i < keep.size(); ++i) sol.coeffs.row(keep[i]) = x.row(i);
  // Real fields: symmetrize coefficients c_{-p} = conj(c_p) against round-off.
  for (int c = 0; c < 2; ++c) {
    CMat C = sol.component(c);
    const CMat Cs = 0.5 * (C + C.reverse().conjugate());
    sol.coeffs.col(c) = grid.matrix_to_flat(Cs);
  }
  recenter(grid, rho_Y_grid(membrane, eta, grid), sol);
  double res = 0.0;
  for (int c = 0; c < 2; ++c) {
    const RMat r = apply_L0_pointwise(ff, grid, sol.component(c)) + (c == 0 ? ff.F1 : ff.F2);
    res = std::max(res, r.cwiseAbs().maxCoeff());
  }
  sol.solver_residual = res;
  sol.consistency_defect = std::max(std::abs((ff.F1.cwiseProduct(ff.sqrtg)).mean()),
                                    std::abs((ff.F2.cwiseProduct(ff.sqrtg)).mean()));
  return sol;
}

}  // namespace

PoissonSolution solve_chi_fixed_eta_on(const Membrane& membrane, const SurfaceState& eta, const FourierGrid& grid) {
  const FrozenFields ff = frozen_fields(membrane, eta, grid);
  const ReducedSystem r = reduced_system(membrane, eta, grid, ff);
  const CMat x = r.keep.empty() ? CMat(0, 2) : CMat(r.A.partialPivLu().solve(r.rhs));
  return finish_solution(membrane, eta, grid, ff, r.keep, x);
}

struct FrozenCellSolver::Impl {
  Membrane membrane;
  FourierGrid grid;
  std::vector<int> keep;
  Eigen::PartialPivLU<CMat> lu;
  PoissonSolution sol;
  Impl(const Membrane& m, const FourierGrid& g) : membrane(m), grid(g) {}
};

FrozenCellSolver::FrozenCellSolver(const Membrane& membrane, const SurfaceState& eta, const FourierGrid& grid)
{
  auto impl = std::make_shared<Impl>(membrane, grid);
  const FrozenFields ff = frozen_fields(membrane, eta, grid);
  const ReducedSystem r = reduced_system(membrane, eta, grid, ff);
  impl->keep = r.keep;
  CMat x(0, 2);
  if (!r.keep.empty()) {
    impl->lu.compute(r.A);
    x = impl->lu.solve(r.rhs);
  }
  impl->sol = finish_solution(membrane, eta, grid, ff, impl->keep, x);
  impl_ = std::move(impl);
}

const PoissonSolution& FrozenCellSolver::solution() const { return impl_->sol; }

PoissonSolution FrozenCellSolver::solve_nearby(const SurfaceState& eta) const {
  const Impl& s = *impl_;
  const FrozenFields ff = frozen_fields(s.membrane, eta, s.grid);
  const ReducedSystem r = reduced_system(s.membrane, eta, s.grid, ff);
  if (r.keep.empty()) return finish_solution(s.membrane, eta, s.grid, ff, r.keep, CMat(0, 2));
  // Iterative refinement preconditioned by the base factorization; direct solve if it stalls.
  CMat x = s.lu.solve(r.rhs);
  bool done = false;
  for (int it = 0; it < 30 && !done; ++it) {
    const CMat dx = s.lu.solve(r.rhs - r.A * x);
    x += dx;
    done = dx.norm() <= 1e-14 * x.norm();
  }
  if (!done) x = r.A.partialPivLu().solve(r.rhs);
  return finish_solution(s.membrane, eta, s.grid, ff, r.keep, x);
}

PoissonSolution solve_chi_fixed_eta(const Membrane& membrane, const SurfaceState& eta, const FixedEtaOptions& opt) {
  std::vector<std::string> trace;
  PoissonSolution sol;
  for (int M = std::max(1, opt.M0);; M *= 2) {
    sol = solve_chi_fixed_eta_on(membrane, eta, FourierGrid(M));
    std::ostringstream line;
    line << "M=" << M << " residual=" << fmt_double(sol.solver_residual);
    trace.push_back(line.str());
    if (sol.solver_residual <= opt.tol) {
      sol.converged = true;
      sol.status = "ok";
      break;
    }
    if (2 * M > opt.M_max) {
      sol.converged = false;
      sol.status = "failed: residual above tolerance at M_max";
      break;
    }
  }
  sol.trace = trace;
  return sol;
}

double nodal_residual(const Membrane& membrane, const SurfaceState& eta, const PoissonSolution& sol) {
  const FourierGrid grid(sol.M);
  const FrozenFields ff = frozen_fields(membrane, eta, grid);
  double res = 0.0;
  for (int c = 0; c < 2; ++c) {
    const RMat r = apply_L0_pointwise(ff, grid, sol.component(c)) + (c == 0 ? ff.F1 : ff.F2);
    res = std::max(res, r.cwiseAbs().maxCoeff());
  }
  return res;
}

Vec2 chi_value(const PoissonSolution& sol, const Vec2& y) {
  const FourierGrid grid(sol.M);
  return Vec2(grid.eval(sol.component(0), y), grid.eval(sol.component(1), y));
}

PoissonSolution perturbative_chi(const Membrane& membrane, const SurfaceState& eta, const FourierGrid& grid) {
  const FrozenFields ff = frozen_fields(membrane, eta, grid);
  PoissonSolution sol;
  sol.M = grid.M();
  sol.coeffs = CMat::Zero(grid.n_modes(), 2);
  for (int c = 0; c < 2; ++c) {
    const CVec b = grid.matrix_to_flat(grid.analyze(c == 0 ? ff.F1 : ff.F2));
    for (int p = 0; p < grid.n_modes(); ++p) {
      const auto mp = grid.mode(p);
      const double k2 = kTwoPi * kTwoPi * (mp[0] * mp[0] + mp[1] * mp[1]);
      if (k2 > 0.0) sol.coeffs(p, c) = b[p] / k2;
    }
  }
  recenter(grid, rho_Y_grid(membrane, eta, grid), sol);
  sol.status = "perturbative";
  return sol;
}

OperatorSplit symmetric_antisymmetric_split(const CMat& G, const CMat& W) {
  if (G.rows() != G.cols() || W.rows() != G.rows() || W.cols() != G.cols())
    throw std::invalid_argument("split: operator and weight sizes differ");
  Eigen::LLT<CMat> llt(W);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("split: weight matrix is not positive definite");
  OperatorSplit s;
  s.adjoint = llt.solve(G.adjoint() * W);
  s.symmetric = 0.5 * (G + s.adjoint);
  s.antisymmetric = 0.5 * (G - s.adjoint);
  return s;
}

namespace {

double grad_sup(const Membrane& m, const SurfaceState& eta) {
  double s = 0.0;
  for (int j = 0; j < m.modes().n_classes(); ++j) {
    const auto& k = m.modes().canonical[j];
    s += 2.0 * std::hypot(eta[2 * j], eta[2 * j + 1]) * kTwoPi * std::hypot(double(k[0]), double(k[1]));
  }
  return s;
}

struct BinSums {
  std::vector<double> I1, I2, II1, II2, F1, F2, FF1, FF2;
  explicit BinSums(size_t n) : I1(n), I2(n), II1(n), II2(n), F1(n), F2(n), FF1(n), FF2(n) {}
  void add(const BinSums& o) {
    for (size_t b = 0; b < I1.size(); ++b) {
      I1[b] += o.I1[b];
      I2[b] += o.I2[b];
      II1[b] += o.II1[b];
      II2[b] += o.II2[b];
      F1[b] += o.F1[b];
      F2[b] += o.F2[b];
      FF1[b] += o.FF1[b];
      FF2[b] += o.FF2[b];
    }
  }
};

ResolventEstimate mc_resolvent(const Membrane& membrane, const Vec2& y0, const SurfaceState& eta0, bool joint,
                               const ResolventOptions& opt) {
  // Conservative rate bound fixes the simulated horizon; the fitted rate picks T* inside it.
  double pmax = grad_sup(membrane, eta0);
  if (joint) {
    const Eigen::VectorXd v = membrane.spectra().var_per_coord(membrane.modes());
    SurfaceState wide = eta0.cwiseAbs() + 4.0 * v.cwiseSqrt();
    pmax = grad_sup(membrane, wide);
  }
  double lambda_lb = kTwoPi * kTwoPi / std::pow(1.0 + pmax * pmax, 1.5);
  if (joint && membrane.dim() > 0)
    lambda_lb = std::min(lambda_lb, *std::min_element(membrane.spectra().gamma.begin(), membrane.spectra().gamma.end()));
  const double t_max = 8.0 / lambda_lb;
  const int bin = std::max(1, opt.bin_steps);
  const long n_bins = std::max<long>(4, std::lround(t_max / (bin * opt.dt)));
  const long n_steps = n_bins * bin;
  const double dt = opt.dt, sdt = std::sqrt(dt);

  OUStepper stepper(membrane, 0.0, 1.0);
  stepper.prepare(dt);

  constexpr long kChunk = 64;
  const long n_chunks = (opt.n_paths + kChunk - 1) / kChunk;
  std::vector<BinSums> partial(n_chunks, BinSums(n_bins + 1));
  parallel_for(n_chunks, opt.workers, [&](long c) {
    BinSums& acc = partial[c];
    for (long r = c * kChunk; r < std::min(opt.n_paths, (c + 1) * kChunk); ++r) {
      RandomStream rb(opt.seed, r, kStreamBrownian), re(opt.seed, r, kStreamEta);
      Vec2 y = y0;
      SurfaceState eta = eta0;
      Vec2 I = Vec2::Zero();
      for (long k = 0; k <= n_steps; ++k) {
        const LocalGeometry g = membrane.local(y, eta);
        if (k % bin == 0) {
          const long b = k / bin;
          acc.I1[b] += I[0];
          acc.I2[b] += I[1];
          acc.II1[b] += I[0] * I[0];
          acc.II2[b] += I[1] * I[1];
          acc.F1[b] += g.drift[0];
          acc.F2[b] += g.drift[1];
          acc.FF1[b] += g.drift[0] * g.drift[0];
          acc.FF2[b] += g.drift[1] * g.drift[1];
        }
        if (k == n_steps) break;
        I += dt * g.drift;
        const Vec2 xi(rb.normal(), rb.normal());
        y += dt * g.drift + sqrt_2sigma(g.sigma) * (sdt * xi);
        y = y.array() - y.array().floor();
        if (joint) stepper.step_prepared(eta, re);
      }
    }
  });
  BinSums tot(n_bins + 1);
  for (const auto& p : partial) tot.add(p);
  const double n = double(opt.n_paths);
  auto mean_se_at = [&](const std::vector<double>& s, const std::vector<double>& ss, long b) {
    const double m = s[b] / n;
    const double var = std::max(0.0, (ss[b] / n - m * m) * n / std::max(1.0, n - 1.0));
    return MeanSE{m, std::sqrt(var / n)};
  };

  ResolventEstimate est;
  est.lambda_hat = lambda_lb;
  double amplitude = 0.0;
  size_t best_pts = 0;
  for (int comp = 0; comp < 2; ++comp) {
    std::vector<double> t, logm;
    for (long b = 0; b <= n_bins; ++b) {
      const MeanSE f = comp == 0 ? mean_se_at(tot.F1, tot.FF1, b) : mean_se_at(tot.F2, tot.FF2, b);
      if (std::abs(f.mean) <= 4.0 * f.se || f.mean == 0.0) break;
      t.push_back(b * bin * dt);
      logm.push_back(std::log(std::abs(f.mean)));
    }
    if (t.size() >= 4 && t.size() > best_pts) {
      const LinearFit fit = linear_fit(t, logm);
      if (fit.slope < 0.0) {
        best_pts = t.size();
        est.lambda_hat = -fit.slope;
        amplitude = std::exp(fit.intercept);
        est.rate_fitted = true;
      }
    }
  }
  if (!est.rate_fitted) amplitude = std::max(std::abs(tot.F1[0]), std::abs(tot.F2[0])) / n;
  const long b_star = std::clamp<long>(std::lround(8.0 / est.lambda_hat / (bin * dt)), 1, n_bins);
  est.t_star = b_star * bin * dt;
  const MeanSE i1 = mean_se_at(tot.I1, tot.II1, b_star), i2 = mean_se_at(tot.I2, tot.II2, b_star);
  est.value = Vec2(i1.mean, i2.mean);
  est.se = Vec2(i1.se, i2.se);
  est.truncation_bound = amplitude * std::exp(-est.lambda_hat * est.t_star) / est.lambda_hat;
  return est;
}

}  // namespace

ResolventEstimate mc_resolvent_fixed_eta(const Membrane& membrane, const SurfaceState& eta, const Vec2& y0,
                                         const ResolventOptions& opt) {
  return mc_resolvent(membrane, y0, eta, false, opt);
}

ResolventEstimate mc_resolvent_joint(const Membrane& membrane, const Vec2& y0, const SurfaceState& eta0,
                                     const ResolventOptions& opt) {
  return mc_resolvent(membrane, y0, eta0, true, opt);
}

}  // namespace helfrich
