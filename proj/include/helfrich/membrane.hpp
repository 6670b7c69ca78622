#ifndef HELFRICH_MEMBRANE_HPP
#define HELFRICH_MEMBRANE_HPP

/// Helfrich membrane geometry on the unit torus: modes, OU spectra, height
/// field and the Laplace-Beltrami coefficients Sigma and F.

#include <Eigen/Dense>
#include <array>
#include <complex>
#include <vector>

namespace helfrich {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
/// Real coordinates of the complex Fourier amplitudes, indexed by ModeSet::real_index.
using SurfaceState = Eigen::VectorXd;

struct ModelParams {
  double kappa_star = 1.0;
  double sigma_star = 1.0;
  int cutoff = 1;

  /// Throws std::invalid_argument on non-positive moduli or negative cutoff.
  void validate() const;
};

using Wavevector = std::array<int, 2>;

struct ModeSet {
  /// All k with 0 < |k| <= cutoff, lexicographic in (k1, k2).
  std::vector<Wavevector> wavevectors;
  /// pairing[i] is the index of -wavevectors[i].
  std::vector<int> pairing;
  /// Canonical member of class i maps to coordinate 2j (Re), its partner to 2j+1 (Im).
  std::vector<int> real_index;
  /// One representative per {k,-k} class, the lexicographically larger one.
  std::vector<Wavevector> canonical;

  int K() const { return static_cast<int>(wavevectors.size()); }
  int n_classes() const { return static_cast<int>(canonical.size()); }
  /// Wavevector index of the canonical member of class j.
  int canonical_index(int j) const;
};

ModeSet build_mode_set(int cutoff);

/// Per-wavevector rates and stationary variances (same ordering as ModeSet).
struct Spectra {
  std::vector<double> gamma;
  std::vector<double> pi;

  /// Rate of each real coordinate (length K).
  Eigen::VectorXd rate_per_coord(const ModeSet& modes) const;
  /// Stationary variance of each real coordinate, Pi_k / 2.
  Eigen::VectorXd var_per_coord(const ModeSet& modes) const;
};

Spectra spectra(const ModelParams& params, const ModeSet& modes);

/// Sigma = (I + p p^T)^{-1} in closed form.
Mat2 sigma_from_grad(const Vec2& p);
/// F = (1/sqrt|g|) div(sqrt|g| Sigma) from gradient p and Hessian H of h.
Vec2 drift_from_derivatives(const Vec2& p, const Mat2& H);

struct LocalGeometry {
  double h = 0.0;
  Vec2 grad = Vec2::Zero();
  Mat2 hess = Mat2::Zero();
  Mat2 sigma = Mat2::Identity();
  Vec2 drift = Vec2::Zero();
  double det_g = 1.0;
};

/// Geometry of a fixed mode set. Immutable after construction.
class Membrane {
 public:
  explicit Membrane(const ModelParams& params);

  const ModelParams& params() const { return params_; }
  const ModeSet& modes() const { return modes_; }
  const Spectra& spectra() const { return spectra_; }
  int dim() const { return modes_.K(); }

  double height(const Vec2& x, const SurfaceState& eta) const;
  /// Direct complex sum over all wavevectors; imaginary part is round-off only.
  std::complex<double> height_complex(const Vec2& x, const SurfaceState& eta) const;
  Vec2 grad_height(const Vec2& x, const SurfaceState& eta) const;
  Mat2 hessian_height(const Vec2& x, const SurfaceState& eta) const;
  Mat2 sigma(const Vec2& x, const SurfaceState& eta) const;
  double det_g(const Vec2& x, const SurfaceState& eta) const;
  Vec2 drift_F(const Vec2& x, const SurfaceState& eta) const;
  LocalGeometry local(const Vec2& x, const SurfaceState& eta) const;

  /// Constant C with |F(x,eta)| <= C |eta| for all x, eta.
  double drift_growth_bound() const;

  /// The same geometry with every Pi_k multiplied by factor (rates unchanged).
  Membrane with_scaled_variance(double factor) const;

 private:
  void derivs(const Vec2& x, const SurfaceState& eta, double* h, Vec2* p, Mat2* H) const;

  ModelParams params_;
  ModeSet modes_;
  Spectra spectra_;
  // 2*pi*k for each canonical class.
  std::vector<Vec2> wave_;
};

}  // namespace helfrich

#endif
