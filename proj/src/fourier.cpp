#include "helfrich/fourier.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace helfrich {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

FourierGrid::FourierGrid(int M, int N) : M_(M), N_(N) {
  if (M < 0) throw std::invalid_argument("Fourier order must be nonnegative");
  if (N_ == 0) N_ = 4 * M + 1;
  if (N_ % 2 == 0) ++N_;
  if (N_ < 4 * M + 1) throw std::invalid_argument("collocation grid too small: need N >= 4M+1 to avoid aliasing");
  E_.resize(N_, width());
  for (int i = 0; i < N_; ++i)
    for (int m = -M_; m <= M_; ++m) E_(i, m + M_) = std::polar(1.0, kTwoPi * double(m) * i / N_);
  const int H = (N_ - 1) / 2;
  Efull_.resize(N_, N_);
  for (int i = 0; i < N_; ++i)
    for (int k = -H; k <= H; ++k) Efull_(i, k + H) = std::polar(1.0, kTwoPi * double(k) * i / N_);
}

RMat FourierGrid::synthesize(const CMat& coeffs) const {
  if (coeffs.rows() == width()) return (E_ * coeffs * E_.transpose()).real();
  if (coeffs.rows() == N_) return (Efull_ * coeffs * Efull_.transpose()).real();
  throw std::invalid_argument("coefficient matrix has the wrong size");
}

CMat FourierGrid::analyze(const RMat& values) const {
  const CMat v = values.cast<cplx>();
  return (E_.adjoint() * v * E_.conjugate()) / double(N_ * N_);
}

CMat FourierGrid::analyze_full(const RMat& values) const {
  const CMat v = values.cast<cplx>();
  return (Efull_.adjoint() * v * Efull_.conjugate()) / double(N_ * N_);
}

CMat FourierGrid::diff(const CMat& coeffs, int i) const {
  const int w = static_cast<int>(coeffs.rows()), half = (w - 1) / 2;
  CMat out(coeffs.rows(), coeffs.cols());
  for (int b = 0; b < w; ++b)
    for (int a = 0; a < w; ++a) {
      const double k = (i == 0 ? a : b) - half;
      out(a, b) = cplx(0.0, kTwoPi * k) * coeffs(a, b);
    }
  return out;
}

CMat FourierGrid::diff2(const CMat& coeffs, int i, int j) const { return diff(diff(coeffs, i), j); }

double FourierGrid::eval(const CMat& coeffs, const Vec2& y) const {
  const int w = static_cast<int>(coeffs.rows()), half = (w - 1) / 2;
  CVec e1(w), e2(w);
  for (int m = -half; m <= half; ++m) {
    e1[m + half] = std::polar(1.0, kTwoPi * m * y[0]);
    e2[m + half] = std::polar(1.0, kTwoPi * m * y[1]);
  }
  return (e1.transpose() * coeffs * e2).value().real();
}

Vec2 FourierGrid::eval_grad(const CMat& coeffs, const Vec2& y) const {
  return Vec2(eval(diff(coeffs, 0), y), eval(diff(coeffs, 1), y));
}

CMat FourierGrid::flat_to_matrix(const CVec& v) const { return Eigen::Map<const CMat>(v.data(), width(), width()); }

CVec FourierGrid::matrix_to_flat(const CMat& m) const { return Eigen::Map<const CVec>(m.data(), m.size()); }

GeometryTable::GeometryTable(const Membrane& membrane, const FourierGrid& grid)
    : K_(membrane.dim()), n_points_(grid.n_points()) {
  dphi1_.resize(K_, n_points_);
  dphi2_.resize(K_, n_points_);
  d11_.resize(K_, n_points_);
  d12_.resize(K_, n_points_);
  d22_.resize(K_, n_points_);
  const auto& canon = membrane.modes().canonical;
  for (int j = 0; j < grid.N(); ++j)
    for (int i = 0; i < grid.N(); ++i) {
      const int pt = i + grid.N() * j;
      const Vec2 y = grid.point(i, j);
      for (size_t c = 0; c < canon.size(); ++c) {
        const Vec2 w(kTwoPi * canon[c][0], kTwoPi * canon[c][1]);
        const double th = w.dot(y), cs = std::cos(th), sn = std::sin(th);
        // phi_{2c} = 2 cos, phi_{2c+1} = -2 sin
        dphi1_(2 * c, pt) = -2.0 * sn * w[0];
        dphi2_(2 * c, pt) = -2.0 * sn * w[1];
        dphi1_(2 * c + 1, pt) = -2.0 * cs * w[0];
        dphi2_(2 * c + 1, pt) = -2.0 * cs * w[1];
        d11_(2 * c, pt) = -2.0 * cs * w[0] * w[0];
        d12_(2 * c, pt) = -2.0 * cs * w[0] * w[1];
        d22_(2 * c, pt) = -2.0 * cs * w[1] * w[1];
        d11_(2 * c + 1, pt) = 2.0 * sn * w[0] * w[0];
        d12_(2 * c + 1, pt) = 2.0 * sn * w[0] * w[1];
        d22_(2 * c + 1, pt) = 2.0 * sn * w[1] * w[1];
      }
    }
}

void GeometryTable::fields(const SurfaceState& eta, double* p1, double* p2, double* h11, double* h12,
                           double* h22) const {
  using Row = Eigen::Map<Eigen::RowVectorXd>;
  const Eigen::RowVectorXd e = eta.transpose();
  Row(p1, n_points_) = e * dphi1_;
  Row(p2, n_points_) = e * dphi2_;
  Row(h11, n_points_) = e * d11_;
  Row(h12, n_points_) = e * d12_;
  Row(h22, n_points_) = e * d22_;
}

}  // namespace helfrich
