#ifndef HELFRICH_FOURIER_HPP
#define HELFRICH_FOURIER_HPP

/// Truncated Fourier basis on the unit torus with an oversampled collocation grid.
/// Coefficients of a field are stored as a (2M+1)x(2M+1) matrix C(m1+M, m2+M);
/// grid values as an NxN matrix G(i, j) at y = (i/N, j/N).

#include <Eigen/Dense>
#include <complex>
#include <functional>

#include "helfrich/membrane.hpp"

namespace helfrich {

using cplx = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;

class FourierGrid {
 public:
  /// N = 0 picks the smallest odd N >= 4M+1.
  explicit FourierGrid(int M, int N = 0);

  int M() const { return M_; }
  int N() const { return N_; }
  int width() const { return 2 * M_ + 1; }
  int n_modes() const { return width() * width(); }
  int n_points() const { return N_ * N_; }
  /// Flat mode index of (m1, m2), column-major over the coefficient matrix.
  int mode_index(int m1, int m2) const { return (m1 + M_) + width() * (m2 + M_); }
  std::array<int, 2> mode(int idx) const { return {idx % width() - M_, idx / width() - M_}; }
  Vec2 point(int i, int j) const { return Vec2(double(i) / N_, double(j) / N_); }

  /// Grid values from coefficients (complex; real fields give real values).
  RMat synthesize(const CMat& coeffs) const;
  /// Truncated discrete projection onto |m_i| <= M.
  CMat analyze(const RMat& values) const;
  /// Coefficients of all N x N resolvable frequencies |k_i| <= (N-1)/2.
  CMat analyze_full(const RMat& values) const;

  /// Derivative coefficient matrices d/dy_i, d^2/dy_i dy_j (spectral multipliers).
  CMat diff(const CMat& coeffs, int i) const;
  CMat diff2(const CMat& coeffs, int i, int j) const;

  /// Evaluates a coefficient field at an arbitrary point.
  double eval(const CMat& coeffs, const Vec2& y) const;
  Vec2 eval_grad(const CMat& coeffs, const Vec2& y) const;

  CMat flat_to_matrix(const CVec& v) const;
  CVec matrix_to_flat(const CMat& m) const;

 private:
  int M_, N_;
  CMat E_;       // N x (2M+1), exp(2 pi i m j / N)
  CMat Efull_;   // N x N
};

/// Per-point tables of the height basis functions phi_c and their derivatives,
/// so h, grad h, Hess h at grid points are linear maps of eta.
class GeometryTable {
 public:
  GeometryTable(const Membrane& membrane, const FourierGrid& grid);

  int n_points() const { return n_points_; }
  /// Coefficient fields at every grid point (flat index i + N j).
  void fields(const SurfaceState& eta, double* p1, double* p2, double* h11, double* h12, double* h22) const;

 private:
  int K_, n_points_;
  RMat dphi1_, dphi2_, d11_, d12_, d22_;  // K x points
};

}  // namespace helfrich

#endif
