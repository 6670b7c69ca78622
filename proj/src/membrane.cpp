#include "helfrich/membrane.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace helfrich {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

bool lex_positive(const Wavevector& k) { return k[0] > 0 || (k[0] == 0 && k[1] > 0); }
}  // namespace

void ModelParams::validate() const {
  if (!(kappa_star > 0.0) || !(sigma_star > 0.0))
    throw std::invalid_argument("kappa_star and sigma_star must be positive");
  if (cutoff < 0) throw std::invalid_argument("cutoff must be nonnegative");
}

int ModeSet::canonical_index(int j) const {
  for (int i = 0; i < K(); ++i)
    if (wavevectors[i] == canonical[j]) return i;
  throw std::logic_error("canonical wavevector missing");
}

ModeSet build_mode_set(int cutoff) {
  ModeSet m;
  if (cutoff < 0) throw std::invalid_argument("cutoff must be nonnegative");
  const int c2 = cutoff * cutoff;
  for (int k1 = -cutoff; k1 <= cutoff; ++k1)
    for (int k2 = -cutoff; k2 <= cutoff; ++k2) {
      const int n2 = k1 * k1 + k2 * k2;
      if (n2 > 0 && n2 <= c2) m.wavevectors.push_back({k1, k2});
    }
  const int K = m.K();
  m.pairing.assign(K, -1);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j)
      if (m.wavevectors[j][0] == -m.wavevectors[i][0] && m.wavevectors[j][1] == -m.wavevectors[i][1])
        m.pairing[i] = j;
  for (int i = 0; i < K; ++i)
    if (lex_positive(m.wavevectors[i])) m.canonical.push_back(m.wavevectors[i]);
  m.real_index.assign(K, -1);
  for (int j = 0; j < m.n_classes(); ++j) {
    const int i = m.canonical_index(j);
    m.real_index[i] = 2 * j;
    m.real_index[m.pairing[i]] = 2 * j + 1;
  }
  return m;
}

Spectra spectra(const ModelParams& params, const ModeSet& modes) {
  Spectra s;
  for (const auto& k : modes.wavevectors) {
    const double q = kTwoPi * std::hypot(double(k[0]), double(k[1]));
    const double energy = params.kappa_star * std::pow(q, 4) + params.sigma_star * q * q;
    s.gamma.push_back(energy / q);
    s.pi.push_back(1.0 / energy);
  }
  return s;
}

Eigen::VectorXd Spectra::rate_per_coord(const ModeSet& modes) const {
  Eigen::VectorXd r(modes.K());
  for (int i = 0; i < modes.K(); ++i) r[modes.real_index[i]] = gamma[i];
  return r;
}

Eigen::VectorXd Spectra::var_per_coord(const ModeSet& modes) const {
  Eigen::VectorXd v(modes.K());
  for (int i = 0; i < modes.K(); ++i) v[modes.real_index[i]] = 0.5 * pi[i];
  return v;
}

Mat2 sigma_from_grad(const Vec2& p) {
  return Mat2::Identity() - p * p.transpose() / (1.0 + p.squaredNorm());
}

Vec2 drift_from_derivatives(const Vec2& p, const Mat2& H) {
  const double g = 1.0 + p.squaredNorm();
  const double pHp = p.dot(H * p);
  return p * ((pHp / g - H.trace()) / g);
}

Membrane::Membrane(const ModelParams& params) : params_(params) {
  params_.validate();
  modes_ = build_mode_set(params_.cutoff);
  spectra_ = helfrich::spectra(params_, modes_);
  for (const auto& k : modes_.canonical) wave_.emplace_back(kTwoPi * k[0], kTwoPi * k[1]);
}

void Membrane::derivs(const Vec2& x, const SurfaceState& eta, double* h, Vec2* p, Mat2* H) const {
  if (eta.size() != dim()) throw std::invalid_argument("surface state has wrong dimension");
  double hv = 0.0;
  Vec2 pv = Vec2::Zero();
  Mat2 Hv = Mat2::Zero();
  for (size_t j = 0; j < wave_.size(); ++j) {
    const Vec2& w = wave_[j];
    const double th = w.dot(x);
    const double c = std::cos(th), s = std::sin(th);
    const double a = eta[2 * j], b = eta[2 * j + 1];
    hv += 2.0 * (a * c - b * s);
    pv += (-2.0 * (a * s + b * c)) * w;
    Hv += (-2.0 * (a * c - b * s)) * (w * w.transpose());
  }
  if (h) *h = hv;
  if (p) *p = pv;
  if (H) *H = Hv;
}

double Membrane::height(const Vec2& x, const SurfaceState& eta) const {
  double h;
  derivs(x, eta, &h, nullptr, nullptr);
  return h;
}

std::complex<double> Membrane::height_complex(const Vec2& x, const SurfaceState& eta) const {
  std::complex<double> sum = 0.0;
  for (int i = 0; i < modes_.K(); ++i) {
    const auto& k = modes_.wavevectors[i];
    const int c = modes_.real_index[i];
    // Canonical members hold (Re, Im); partners read the conjugate.
    const bool canon = (c % 2 == 0);
    const int base = c - (c % 2);
    const std::complex<double> amp(eta[base], canon ? eta[base + 1] : -eta[base + 1]);
    sum += amp * std::polar(1.0, kTwoPi * (k[0] * x[0] + k[1] * x[1]));
  }
  return sum;
}

Vec2 Membrane::grad_height(const Vec2& x, const SurfaceState& eta) const {
  Vec2 p;
  derivs(x, eta, nullptr, &p, nullptr);
  return p;
}

Mat2 Membrane::hessian_height(const Vec2& x, const SurfaceState& eta) const {
  Mat2 H;
  derivs(x, eta, nullptr, nullptr, &H);
  return H;
}

Mat2 Membrane::sigma(const Vec2& x, const SurfaceState& eta) const {
  return sigma_from_grad(grad_height(x, eta));
}

double Membrane::det_g(const Vec2& x, const SurfaceState& eta) const {
  return 1.0 + grad_height(x, eta).squaredNorm();
}

Vec2 Membrane::drift_F(const Vec2& x, const SurfaceState& eta) const {
  Vec2 p;
  Mat2 H;
  derivs(x, eta, nullptr, &p, &H);
  return drift_from_derivatives(p, H);
}

LocalGeometry Membrane::local(const Vec2& x, const SurfaceState& eta) const {
  LocalGeometry g;
  derivs(x, eta, &g.h, &g.grad, &g.hess);
  g.det_g = 1.0 + g.grad.squaredNorm();
  g.sigma = sigma_from_grad(g.grad);
  g.drift = drift_from_derivatives(g.grad, g.hess);
  return g;
}

double Membrane::drift_growth_bound() const {
  // |F| <= (|p|/g)(|pHp|/g + |tr H|) <= sum_j |c_j| |w_j|^2 with |p|/g <= 1/2,
  // and sum_j |c_j| <= sqrt(n_classes) |eta| for c_j = 2 (a_j, b_j) amplitudes.
  double wmax2 = 0.0;
  for (const auto& w : wave_) wmax2 = std::max(wmax2, w.squaredNorm());
  return 2.0 * wmax2 * std::sqrt(double(wave_.size()));
}

Membrane Membrane::with_scaled_variance(double factor) const {
  if (!(factor > 0.0)) throw std::invalid_argument("variance factor must be positive");
  Membrane m = *this;
  for (double& p : m.spectra_.pi) p *= factor;
  return m;
}

}  // namespace helfrich
