#include "helfrich/joint_generator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "helfrich/krylov.hpp"
#include "helfrich/ou_process.hpp"
#include "helfrich/util.hpp"

namespace helfrich {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kNodeChunk = 128;
}  // namespace

HermiteFourierBasis::HermiteFourierBasis(const Membrane& membrane, int M, int d, int quad_order)
    : membrane_(membrane),
      grid_(M),
      hermite_(membrane.dim(), d),
      quad_(tensor_gauss_hermite(membrane.dim(), quad_order > 0 ? quad_order : 2 * d + 2)) {
  if (d < 0) throw std::invalid_argument("Hermite degree must be nonnegative");
  const int K = membrane.dim();
  sd_ = membrane.spectra().var_per_coord(membrane.modes()).cwiseSqrt();
  const Eigen::VectorXd rates = membrane.spectra().rate_per_coord(membrane.modes());
  lambda_.resize(hermite_.size());
  for (int a = 0; a < hermite_.size(); ++a) lambda_[a] = ou_generator_eigenvalue(hermite_[a], rates);
  Hq_.resize(hermite_.size(), quad_.size());
  for (int n = 0; n < quad_.size(); ++n) {
    const Eigen::VectorXd xi = K ? Eigen::VectorXd(quad_.nodes.col(n)) : Eigen::VectorXd();
    Hq_.col(n) = multi_hermite_values(hermite_, xi);
  }
  if (orthonormality_error() > 1e-10) throw std::invalid_argument("quadrature order insufficient");
}

SurfaceState HermiteFourierBasis::node_eta(int n) const {
  if (membrane_.dim() == 0) return SurfaceState();
  return sd_.cwiseProduct(quad_.nodes.col(n));
}

double HermiteFourierBasis::orthonormality_error() const {
  const RMat gram = Hq_ * quad_.weights.asDiagonal() * Hq_.transpose();
  return (gram - RMat::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
}

CMat HermiteFourierBasis::at_node(const CMat& C, int n) const {
  const CVec v = C * Hq_.col(n).cast<cplx>();
  return Eigen::Map<const CMat>(v.data(), grid_.width(), grid_.width());
}

CMat HermiteFourierBasis::eta_derivative(const CMat& C, int c) const {
  CMat out = CMat::Zero(C.rows(), C.cols());
  for (int a = 0; a < hermite_.size(); ++a) {
    const MultiIndex& m = hermite_[a];
    if (m[c] == 0) continue;
    MultiIndex lower = m;
    --lower[c];
    const int b = hermite_.find(lower);
    out.col(b) += (std::sqrt(double(m[c])) / sd_[c]) * C.col(a);
  }
  return out;
}

namespace {

// Dense synthesis/analysis tables for one grid, split into real and imaginary parts
// so the real-valued products cost two real GEMMs instead of a complex one.
struct Transform {
  int N = 0, w = 0;
  CMat Et, D1Et, D2Et;  // w x N: E^T, diag(i 2pi m) E^T, diag(-(2pi m)^2) E^T
  RMat Er, Ei, E1r, E1i, E2r, E2i;  // N x w: E, E diag(i 2pi m), E diag(-(2pi m)^2)
  RMat Ar, Ai;  // N x w, for analysis: values -> E^H v conj(E) / N^2

  explicit Transform(const FourierGrid& g) : N(g.N()), w(g.width()) {
    CMat E(N, w), E1(N, w), E2(N, w);
    for (int i = 0; i < N; ++i)
      for (int m = -g.M(); m <= g.M(); ++m) {
        const cplx e = std::polar(1.0, kTwoPi * double(m) * i / N);
        E(i, m + g.M()) = e;
        E1(i, m + g.M()) = e * cplx(0.0, kTwoPi * m);
        E2(i, m + g.M()) = -e * (kTwoPi * m) * (kTwoPi * m);
      }
    Et = E.transpose();
    D1Et = E1.transpose();
    D2Et = E2.transpose();
    Er = E.real();
    Ei = E.imag();
    E1r = E1.real();
    E1i = E1.imag();
    E2r = E2.real();
    E2i = E2.imag();
    Ar = E.real();
    Ai = E.imag();
  }

  // Re(L * B) for L = Lr + i Li (N x w) and B (w x N).
  static void real_product(const RMat& Lr, const RMat& Li, const CMat& B, RMat& out) {
    out.noalias() = Lr * B.real();
    out.noalias() -= Li * B.imag();
  }

  // Truncated coefficients of a real grid field: E^H v conj(E) / N^2.
  CMat analyze(const RMat& v) const {
    // E^H v = (Er^T - i Ei^T) v
    const RMat br = Ar.transpose() * v, bi = -(Ai.transpose() * v);
    // (br + i bi)(Er - i Ei)
    CMat out(w, w);
    out.real() = br * Ar + bi * Ai;
    out.imag() = bi * Ar - br * Ai;
    return out / double(N * N);
  }
};

struct PointGeometry {
  Eigen::ArrayXd p1, p2, h11, h12, h22;
  Eigen::ArrayXd F1, F2, S11, S12, S22, sqrtg, r1, r2;

  void compute(const GeometryTable& table, const SurfaceState& eta, int K) {
    const int P = table.n_points();
    for (auto* a : {&p1, &p2, &h11, &h12, &h22, &F1, &F2, &S11, &S12, &S22, &sqrtg, &r1, &r2}) a->resize(P);
    if (K == 0) {
      for (auto* a : {&p1, &p2, &h11, &h12, &h22, &F1, &F2, &S12, &r1, &r2}) a->setZero();
      S11.setOnes();
      S22.setOnes();
      sqrtg.setOnes();
      return;
    }
    table.fields(eta, p1.data(), p2.data(), h11.data(), h12.data(), h22.data());
    const Eigen::ArrayXd g = 1.0 + p1 * p1 + p2 * p2;
    const Eigen::ArrayXd Hp1 = h11 * p1 + h12 * p2, Hp2 = h12 * p1 + h22 * p2;
    const Eigen::ArrayXd pHp = p1 * Hp1 + p2 * Hp2;
    const Eigen::ArrayXd c = (pHp / g - (h11 + h22)) / g;
    F1 = p1 * c;
    F2 = p2 * c;
    S11 = 1.0 - p1 * p1 / g;
    S12 = -p1 * p2 / g;
    S22 = 1.0 - p2 * p2 / g;
    sqrtg = g.sqrt();
    // Sigma H p / g
    r1 = (S11 * Hp1 + S12 * Hp2) / g;
    r2 = (S12 * Hp1 + S22 * Hp2) / g;
  }
};

using MapA = Eigen::Map<const Eigen::ArrayXd>;
inline Eigen::Map<const Eigen::ArrayXd> flat(const RMat& m) { return MapA(m.data(), m.size()); }

struct Scratch {
  PointGeometry geo;
  RMat u, u1, u2, u11, u12, u22, val, q1, q2;
};

// L0 u at the grid points for coefficient matrix Cn (w x w).
void forward_values(const Transform& T, const PointGeometry& geo, const CMat& Cn, Scratch& s) {
  const CMat A0 = Cn * T.Et, A1 = Cn * T.D1Et, A2 = Cn * T.D2Et;
  Transform::real_product(T.E1r, T.E1i, A0, s.u1);
  Transform::real_product(T.E2r, T.E2i, A0, s.u11);
  Transform::real_product(T.Er, T.Ei, A1, s.u2);
  Transform::real_product(T.E1r, T.E1i, A1, s.u12);
  Transform::real_product(T.Er, T.Ei, A2, s.u22);
  s.val.resize(T.N, T.N);
  Eigen::Map<Eigen::ArrayXd>(s.val.data(), s.val.size()) =
      geo.F1 * flat(s.u1) + geo.F2 * flat(s.u2) + geo.S11 * flat(s.u11) + 2.0 * geo.S12 * flat(s.u12) +
      geo.S22 * flat(s.u22);
}

}  // namespace

JointGenerator::JointGenerator(const HermiteFourierBasis& basis, int workers)
    : basis_(basis), table_(basis.membrane(), basis.grid()), workers_(std::max(1, workers)) {
  if (basis.membrane().dim() > 0 && basis.membrane().params().cutoff > 1)
    throw std::invalid_argument("joint Galerkin generator supports cutoff <= 1 only");
  if (basis.degree() > 6) throw std::invalid_argument("joint Galerkin generator supports Hermite degree <= 6 only");
}

template <class Kernel>
CMat JointGenerator::map_nodes(const CMat& C, Kernel&& kernel) const {
  const int nF = basis_.n_fourier(), nH = basis_.n_hermite(), nN = basis_.n_nodes();
  const RMat& Hq = basis_.node_values();
  const Eigen::VectorXd& wq = basis_.quadrature().weights;
  const int n_chunks = (nN + kNodeChunk - 1) / kNodeChunk;
  std::vector<CMat> partial(n_chunks);
  const Transform T(basis_.grid());
  const int K = basis_.membrane().dim();
  const int w = basis_.grid().width();
  parallel_for(n_chunks, workers_, [&](long c) {
    const int n0 = int(c) * kNodeChunk, nc = std::min(kNodeChunk, nN - n0);
    const CMat Uc = C * Hq.block(0, n0, nH, nc).cast<cplx>();
    CMat out(nF, nc);
    Scratch s;
    for (int k = 0; k < nc; ++k) {
      s.geo.compute(table_, basis_.node_eta(n0 + k), K);
      const CMat Cn = Eigen::Map<const CMat>(Uc.col(k).data(), w, w);
      const CMat o = kernel(T, s, Cn);
      out.col(k) = Eigen::Map<const CVec>(o.data(), nF);
    }
    const RMat WH = wq.segment(n0, nc).asDiagonal() * Hq.block(0, n0, nH, nc).transpose();
    partial[c] = out * WH.cast<cplx>();
  });
  CMat V = CMat::Zero(nF, nH);
  for (const CMat& p : partial) V += p;
  return V;
}

CMat JointGenerator::apply(const CMat& C) const {
  CMat V = map_nodes(C, [](const Transform& T, Scratch& s, const CMat& Cn) {
    forward_values(T, s.geo, Cn, s);
    return T.analyze(s.val);
  });
  V += C * basis_.eta_eigenvalues().cast<cplx>().asDiagonal();
  return V;
}

CMat JointGenerator::apply_adjoint(const CMat& C) const {
  const int M = basis_.M();
  CMat V = map_nodes(C, [M](const Transform& T, Scratch& s, const CMat& Cn) {
    const CMat A0 = Cn * T.Et, A1 = Cn * T.D1Et;
    Transform::real_product(T.Er, T.Ei, A0, s.u);
    Transform::real_product(T.E1r, T.E1i, A0, s.u1);
    Transform::real_product(T.Er, T.Ei, A1, s.u2);
    s.q1.resize(T.N, T.N);
    s.q2.resize(T.N, T.N);
    const auto& g = s.geo;
    Eigen::Map<Eigen::ArrayXd>(s.q1.data(), s.q1.size()) = g.S11 * flat(s.u1) + g.S12 * flat(s.u2) - flat(s.u) * g.r1;
    Eigen::Map<Eigen::ArrayXd>(s.q2.data(), s.q2.size()) = g.S12 * flat(s.u1) + g.S22 * flat(s.u2) - flat(s.u) * g.r2;
    const CMat a1 = T.analyze(s.q1), a2 = T.analyze(s.q2);
    CMat out(T.w, T.w);
    for (int b = 0; b < T.w; ++b)
      for (int a = 0; a < T.w; ++a)
        out(a, b) = cplx(0.0, kTwoPi) * (double(a - M) * a1(a, b) + double(b - M) * a2(a, b));
    return out;
  });
  V += C * basis_.eta_eigenvalues().cast<cplx>().asDiagonal();
  return V;
}

std::pair<CMat, CMat> JointGenerator::project_drift() const {
  // The kernel ignores its input.
  const CMat zero = CMat::Zero(basis_.n_fourier(), basis_.n_hermite());
  auto drift = [&](int comp) {
    return map_nodes(zero, [comp](const Transform& T, Scratch& s, const CMat&) {
      RMat v(T.N, T.N);
      Eigen::Map<Eigen::ArrayXd>(v.data(), v.size()) = comp == 0 ? s.geo.F1 : s.geo.F2;
      return T.analyze(v);
    });
  };
  return {drift(0), drift(1)};
}

CMat JointGenerator::preconditioner_diag() const {
  const FourierGrid& g = basis_.grid();
  CMat P(basis_.n_fourier(), basis_.n_hermite());
  for (int a = 0; a < basis_.n_hermite(); ++a)
    for (int p = 0; p < basis_.n_fourier(); ++p) {
      const auto m = g.mode(p);
      const double sym = -kTwoPi * kTwoPi * double(m[0] * m[0] + m[1] * m[1]) + basis_.eta_eigenvalues()[a];
      P(p, a) = sym == 0.0 ? 0.0 : 1.0 / sym;
    }
  return P;
}

CMat JointGenerator::dense() const {
  const long n = basis_.size();
  if (n > 4000) throw std::invalid_argument("dense joint generator requested for a large basis");
  CMat D(n, n);
  // apply() acts on real fields, so each complex column is assembled from the
  // conjugate-symmetric pair e_p + e_-p and i (e_p - e_-p).
  const FourierGrid& grid = basis_.grid();
  for (long j = 0; j < n; ++j) {
    const int p = int(j % basis_.n_fourier()), a = int(j / basis_.n_fourier());
    const auto mp = grid.mode(p);
    const int q = grid.mode_index(-mp[0], -mp[1]);
    CMat e1 = CMat::Zero(basis_.n_fourier(), basis_.n_hermite()), e2 = e1;
    e1(p, a) += 1.0;
    e1(q, a) += 1.0;
    e2(p, a) += cplx(0.0, 1.0);
    e2(q, a) -= cplx(0.0, 1.0);
    const CMat col = 0.5 * (apply(e1) - cplx(0.0, 1.0) * apply(e2));
    D.col(j) = Eigen::Map<const CVec>(col.data(), n);
  }
  return D;
}

NodeGeometry JointGenerator::node_geometry(int n) const {
  PointGeometry g;
  g.compute(table_, basis_.node_eta(n), basis_.membrane().dim());
  const int N = basis_.grid().N();
  NodeGeometry out;
  auto put = [N](const Eigen::ArrayXd& a) { return RMat(Eigen::Map<const RMat>(a.data(), N, N)); };
  out.F1 = put(g.F1);
  out.F2 = put(g.F2);
  out.S11 = put(g.S11);
  out.S12 = put(g.S12);
  out.S22 = put(g.S22);
  out.sqrtg = put(g.sqrtg);
  out.rhs1 = put(g.r1);
  out.rhs2 = put(g.r2);
  return out;
}

namespace {

CVec to_vec(const CMat& m) { return Eigen::Map<const CVec>(m.data(), m.size()); }
CMat to_mat(const CVec& v, int rows, int cols) { return Eigen::Map<const CMat>(v.data(), rows, cols); }

// Real fields have c(-p, a) = conj(c(p, a)).
void symmetrize(const FourierGrid& grid, CMat& C) {
  const int w = grid.width();
  for (int a = 0; a < C.cols(); ++a) {
    const CMat X = Eigen::Map<const CMat>(C.col(a).data(), w, w);
    const CMat Xs = 0.5 * (X + X.reverse().conjugate());
    C.col(a) = Eigen::Map<const CVec>(Xs.data(), w * w);
  }
}

struct Solved {
  CMat X;
  GmresResult info;
};

// Solves op(X) = B on the complement of the (0,0) mode with the flat-symbol preconditioner.
template <class Op>
Solved solve_reduced(const HermiteFourierBasis& basis, const JointGenerator& G, Op&& op, CMat B,
                     const JointSolveOptions& opt) {
  const int nF = basis.n_fourier(), nH = basis.n_hermite();
  const int zero = basis.grid().mode_index(0, 0);
  B(zero, 0) = 0.0;
  const CMat P = G.preconditioner_diag();
  auto A = [&](const CVec& v) {
    CMat out = op(to_mat(v, nF, nH));
    out(zero, 0) = 0.0;
    return to_vec(out);
  };
  auto prec = [&](const CVec& v) { return to_vec(to_mat(v, nF, nH).cwiseProduct(P)); };
  const CVec b = to_vec(B);
  CVec x = CVec::Zero(b.size());
  Solved s;
  const double tol = std::max(opt.gmres_tol * b.norm(), 1e-300);
  s.info = gmres(A, prec, b, x, tol, opt.max_iter, opt.restart);
  s.X = to_mat(x, nF, nH);
  return s;
}

}  // namespace

InvariantDensity solve_invariant_density(const HermiteFourierBasis& basis, const JointSolveOptions& opt) {
  const JointGenerator G(basis, opt.workers);
  const int nF = basis.n_fourier(), nH = basis.n_hermite();
  const int zero = basis.grid().mode_index(0, 0);
  CMat e00 = CMat::Zero(nF, nH);
  e00(zero, 0) = 1.0;
  const CMat rhs = -G.apply_adjoint(e00);
  Solved s = solve_reduced(basis, G, [&](const CMat& X) { return G.apply_adjoint(X); }, rhs, opt);
  CMat g = s.X;
  g(zero, 0) = 1.0;
  symmetrize(basis.grid(), g);

  InvariantDensity rho;
  rho.kind = InvariantDensity::Kind::GalerkinGEta;
  rho.M = basis.M();
  rho.hermite_degree = basis.degree();
  rho.coeffs = to_vec(g);
  rho.normalization = 1.0;
  double mn = 1e300;
  for (int n = 0; n < basis.n_nodes(); ++n) mn = std::min(mn, basis.grid().synthesize(basis.at_node(g, n)).minCoeff());
  rho.min_value = mn;
  return rho;
}

namespace {

// Nodal L2(dy x rho_eta) norm of G chi + F per component, with G applied pointwise.
double truncation_residual(const HermiteFourierBasis& basis, const CMat& chi_c, int comp) {
  const FourierGrid& grid = basis.grid();
  const Transform T(grid);
  const GeometryTable table(basis.membrane(), grid);
  const CMat Lchi = chi_c * basis.eta_eigenvalues().cast<cplx>().asDiagonal();
  const int K = basis.membrane().dim();
  double total = 0.0;
  Scratch s;
  for (int n = 0; n < basis.n_nodes(); ++n) {
    s.geo.compute(table, basis.node_eta(n), K);
    forward_values(T, s.geo, basis.at_node(chi_c, n), s);
    const RMat le = grid.synthesize(basis.at_node(Lchi, n));
    const Eigen::ArrayXd r = flat(s.val) + flat(le) + (comp == 0 ? s.geo.F1 : s.geo.F2);
    total += basis.quadrature().weights[n] * r.square().mean();
  }
  return std::sqrt(total);
}

double rho_mean(const HermiteFourierBasis& basis, const CMat& X, const CMat& g) {
  double m = 0.0;
  for (int n = 0; n < basis.n_nodes(); ++n) {
    const RMat v = basis.grid().synthesize(basis.at_node(X, n));
    const RMat gn = basis.grid().synthesize(basis.at_node(g, n));
    m += basis.quadrature().weights[n] * v.cwiseProduct(gn).mean();
  }
  return m;
}

}  // namespace

PoissonSolution solve_chi_12(const HermiteFourierBasis& basis, const InvariantDensity& rho,
                             const JointSolveOptions& opt) {
  if (rho.kind != InvariantDensity::Kind::GalerkinGEta || rho.M != basis.M() ||
      rho.hermite_degree != basis.degree())
    throw std::invalid_argument("invariant density does not match the basis");
  const JointGenerator G(basis, opt.workers);
  const int nF = basis.n_fourier(), nH = basis.n_hermite();
  const int zero = basis.grid().mode_index(0, 0);
  const auto [F1, F2] = G.project_drift();

  PoissonSolution sol;
  sol.M = basis.M();
  sol.hermite_degree = basis.degree();
  sol.coeffs = CMat::Zero(basis.size(), 2);
  sol.converged = true;
  for (int c = 0; c < 2; ++c) {
    const CMat& Fc = c == 0 ? F1 : F2;
    Solved s = solve_reduced(basis, G, [&](const CMat& X) { return G.apply(X); }, CMat(-Fc), opt);
    CMat X = s.X;
    X(zero, 0) = 0.0;
    symmetrize(basis.grid(), X);
    // Residual of the Galerkin system, with and without the dropped constant row.
    CMat R = G.apply(X) + Fc;
    sol.consistency_defect = std::max(sol.consistency_defect, std::abs(R(zero, 0)));
    R(zero, 0) = 0.0;
    sol.solver_residual = std::max(sol.solver_residual, R.norm());
    std::ostringstream line;
    line << "M=" << basis.M() << " d=" << basis.degree() << " comp=" << c << " gmres_iters=" << s.info.iterations
         << " residual=" << fmt_double(R.norm());
    sol.trace.push_back(line.str());
    sol.coeffs.col(c) = to_vec(X);
  }
  // Center under rho.
  const CMat g = to_mat(rho.coeffs, nF, nH);
  double worst = 0.0;
  for (int c = 0; c < 2; ++c) {
    sol.coeffs(zero, c) -= rho_mean(basis, to_mat(sol.coeffs.col(c), nF, nH), g);
    const CMat X = to_mat(sol.coeffs.col(c), nF, nH);
    worst = std::max(worst, std::abs(rho_mean(basis, X, g)));
    sol.truncation_residual = std::max(sol.truncation_residual, truncation_residual(basis, X, c));
  }
  sol.centering_residual = worst;
  sol.status = sol.solver_residual <= opt.tol ? "ok" : "failed: residual above tolerance";
  sol.converged = sol.solver_residual <= opt.tol;
  return sol;
}

PoissonSolution solve_chi_12_adaptive(const Membrane& membrane, const JointRefinement& ref,
                                      const JointSolveOptions& opt) {
  int M = ref.M0, d = ref.d0;
  std::vector<std::string> trace;
  bool bump_M = true;
  for (;;) {
    const HermiteFourierBasis basis(membrane, M, d);
    const InvariantDensity rho = solve_invariant_density(basis, opt);
    PoissonSolution sol = solve_chi_12(basis, rho, opt);
    trace.insert(trace.end(), sol.trace.begin(), sol.trace.end());
    if (sol.converged) {
      sol.trace = trace;
      return sol;
    }
    const bool can_M = M + 2 <= ref.M_max, can_d = d + 1 <= ref.d_max;
    if (!can_M && !can_d) {
      sol.status = "failed: refinement limits reached";
      sol.trace = trace;
      return sol;
    }
    if ((bump_M && can_M) || !can_d)
      M += 2;
    else
      d += 1;
    bump_M = !bump_M;
  }
}

double galerkin_density_value(const HermiteFourierBasis& basis, const InvariantDensity& rho, const Vec2& y,
                              const SurfaceState& eta) {
  const int nF = basis.n_fourier(), nH = basis.n_hermite();
  const Eigen::VectorXd xi = basis.membrane().dim() ? Eigen::VectorXd(eta.cwiseQuotient(basis.eta_sd())) : eta;
  const Eigen::VectorXd psi = multi_hermite_values(basis.hermite(), xi);
  const CVec c = to_mat(rho.coeffs, nF, nH) * psi.cast<cplx>();
  return basis.grid().eval(basis.grid().flat_to_matrix(c), y);
}

StartDensity make_start_density(const HermiteFourierBasis& basis, const InvariantDensity& rho) {
  const int nF = basis.n_fourier(), nH = basis.n_hermite();
  const Eigen::VectorXd colsum = to_mat(rho.coeffs, nF, nH).cwiseAbs().colwise().sum().transpose();
  StartDensity s;
  // Copies keep the closures valid after the basis goes away.
  auto b = std::make_shared<HermiteFourierBasis>(basis);
  auto r = std::make_shared<InvariantDensity>(rho);
  s.density = [b, r](const Vec2& y, const SurfaceState& eta) {
    return std::max(0.0, galerkin_density_value(*b, *r, y, eta));
  };
  s.bound = [b, colsum](const SurfaceState& eta) {
    const Eigen::VectorXd xi = b->membrane().dim() ? Eigen::VectorXd(eta.cwiseQuotient(b->eta_sd())) : eta;
    return multi_hermite_values(b->hermite(), xi).cwiseAbs().dot(colsum);
  };
  return s;
}

double eta_marginal_defect(const HermiteFourierBasis& basis, const InvariantDensity& rho) {
  const int nF = basis.n_fourier(), nH = basis.n_hermite();
  const int zero = basis.grid().mode_index(0, 0);
  const CMat g = to_mat(rho.coeffs, nF, nH);
  double worst = 0.0;
  for (int a = 1; a < nH; ++a) worst = std::max(worst, std::abs(g(zero, a)));
  return worst;
}

Vec2 chi12_value(const HermiteFourierBasis& basis, const PoissonSolution& chi, const Vec2& y,
                 const SurfaceState& eta) {
  const int nF = basis.n_fourier(), nH = basis.n_hermite();
  const Eigen::VectorXd xi = basis.membrane().dim() ? Eigen::VectorXd(eta.cwiseQuotient(basis.eta_sd())) : eta;
  const CVec psi = multi_hermite_values(basis.hermite(), xi).cast<cplx>();
  Vec2 out;
  for (int c = 0; c < 2; ++c) {
    const CVec v = to_mat(chi.coeffs.col(c), nF, nH) * psi;
    out[c] = basis.grid().eval(basis.grid().flat_to_matrix(v), y);
  }
  return out;
}

PoissonSolution perturbative_chi_12(const HermiteFourierBasis& basis) {
  // Quadratic part of F: -grad h Lap h, projected by the basis quadrature.
  const FourierGrid& grid = basis.grid();
  const GeometryTable table(basis.membrane(), grid);
  const Transform T(grid);
  const int nF = basis.n_fourier(), nH = basis.n_hermite(), K = basis.membrane().dim();
  PoissonSolution sol;
  sol.M = basis.M();
  sol.hermite_degree = basis.degree();
  sol.coeffs = CMat::Zero(basis.size(), 2);
  const JointGenerator G(basis);
  const CMat P = G.preconditioner_diag();
  for (int c = 0; c < 2; ++c) {
    CMat B = CMat::Zero(nF, nH);
    PointGeometry geo;
    for (int n = 0; n < basis.n_nodes(); ++n) {
      geo.compute(table, basis.node_eta(n), K);
      const Eigen::ArrayXd f2 = -(c == 0 ? geo.p1 : geo.p2) * (geo.h11 + geo.h22);
      RMat v(grid.N(), grid.N());
      Eigen::Map<Eigen::ArrayXd>(v.data(), v.size()) = f2;
      const CMat a = T.analyze(v);
      B += basis.quadrature().weights[n] * to_vec(a) * basis.node_values().col(n).transpose().cast<cplx>();
    }
    // chi = -(Delta + L_eta)^{-1} F2
    CMat X = -B.cwiseProduct(P);
    symmetrize(grid, X);
    sol.coeffs.col(c) = to_vec(X);
  }
  sol.status = "perturbative";
  sol.converged = true;
  return sol;
}

}  // namespace helfrich
