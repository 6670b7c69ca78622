#include "helfrich/sde_sim.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace helfrich {

ScalingRegime ScalingRegime::parse(const std::string& name) {
  if (name == "avg") return averaging();
  if (name == "hom12") return hom12();
  if (name == "hom11") return hom11();
  throw std::invalid_argument("unknown regime '" + name + "' (expected avg|hom12|hom11)");
}

std::string ScalingRegime::name() const {
  if (alpha == 0 && beta == 1) return "avg";
  if (alpha == 1 && beta == 2) return "hom12";
  if (alpha == 1 && beta == 1) return "hom11";
  return "invalid";
}

void ScalingRegime::validate() const {
  if (name() == "invalid") throw std::invalid_argument("(alpha,beta) must be one of (0,1),(1,2),(1,1)");
}

double dt_max(const ScalingRegime& regime, double epsilon, double horizon) {
  if (regime.alpha == 0) return 1e-3 * horizon;
  return 1e-2 * std::pow(epsilon, 2 * regime.alpha);
}

long SimConfig::n_steps() const { return std::lround(horizon / dt); }

void SimConfig::validate(bool flat_membrane) const {
  regime.validate();
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (n_paths < 1) throw std::invalid_argument("n_paths must be positive");
  const double lim = dt_max(regime, epsilon, horizon);
  if (!flat_membrane && dt > lim * (1.0 + 1e-12))
    throw std::invalid_argument("dt=" + fmt_double(dt) + " exceeds dt_max=" + fmt_double(lim) + " for regime " +
                                regime.name());
  const double ratio = horizon / dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) throw std::invalid_argument("horizon/dt must be an integer");
}

std::uint64_t SimConfig::hash() const {
  std::ostringstream s;
  s << regime.name() << '|' << fmt_double(epsilon) << '|' << fmt_double(horizon) << '|' << fmt_double(dt) << '|'
    << n_paths << '|' << master_seed << '|';
  if (x0)
    s << fmt_double((*x0)[0]) << ',' << fmt_double((*x0)[1]);
  else
    s << "stationary";
  return fnv1a(s.str());
}

Vec2 PathSample::y(long i) const {
  Vec2 v = x[i] / scale;
  return v.array() - v.array().floor();
}

Mat2 sqrt_2sigma(const Mat2& sigma) {
  const double a = sigma(0, 0), b = sigma(0, 1), c = sigma(1, 1);
  const double scale = std::max({std::abs(a), std::abs(b), std::abs(c), 1e-300});
  if (std::abs(sigma(0, 1) - sigma(1, 0)) > 1e-14 * scale) throw std::invalid_argument("sqrt_2sigma: input not symmetric");
  const double mid = 0.5 * (a + c);
  const double rad = std::hypot(0.5 * (a - c), b);
  double lp = mid + rad, lm = mid - rad;
  if (lm < -1e-12 * scale) throw std::invalid_argument("sqrt_2sigma: input not positive semidefinite");
  lm = std::max(lm, 0.0);
  lp = std::max(lp, 0.0);
  // Leading eigenvector from the better-conditioned column of (Sigma - lm I).
  Vec2 v;
  if (rad == 0.0) {
    v << 1.0, 0.0;
  } else if (a >= c) {
    v << a - lm, b;
  } else {
    v << b, c - lm;
  }
  v.normalize();
  const double sp = std::sqrt(2.0 * lp), sm = std::sqrt(2.0 * lm);
  return sm * Mat2::Identity() + (sp - sm) * (v * v.transpose());
}

namespace {

// sqrt(2 Sigma) for Sigma = I - p p^T / (1+|p|^2): eigenvalue 1 off p, 1/g along p.
inline Mat2 sqrt_2sigma_from_grad(const Vec2& p) {
  const double p2 = p.squaredNorm();
  const double s2 = std::sqrt(2.0);
  if (p2 == 0.0) return s2 * Mat2::Identity();
  const double g = 1.0 + p2;
  const double coef = (1.0 - 1.0 / std::sqrt(g)) / p2;
  return s2 * (Mat2::Identity() - coef * (p * p.transpose()));
}

double grad_bound(const Membrane& m, const SurfaceState& eta) {
  // |grad h| <= sum_j 2 |(a_j,b_j)| |2 pi k_j|
  double s = 0.0;
  for (int j = 0; j < m.modes().n_classes(); ++j) {
    const auto& k = m.modes().canonical[j];
    s += 2.0 * std::hypot(eta[2 * j], eta[2 * j + 1]) * 2.0 * M_PI * std::hypot(double(k[0]), double(k[1]));
  }
  return s;
}

}  // namespace

PathSimulator::PathSimulator(const Membrane& membrane, const SimConfig& config, std::optional<StartDensity> start)
    : membrane_(membrane),
      config_(config),
      start_(std::move(start)),
      stepper_(membrane, config.regime.beta, config.epsilon),
      scale_(std::pow(config.epsilon, config.regime.alpha)) {
  config_.validate(membrane_.dim() == 0);
  stepper_.prepare(config_.dt);
}

Vec2 PathSimulator::sample_rho_y(const SurfaceState& eta, RandomStream& rng) const {
  const double b = grad_bound(membrane_, eta);
  const double top = std::sqrt(1.0 + b * b);
  for (int tries = 0; tries < 1000000; ++tries) {
    const Vec2 y(rng.uniform(), rng.uniform());
    const double dens = std::sqrt(membrane_.det_g(y, eta));
    if (rng.uniform() * top <= dens) return y;
  }
  throw std::runtime_error("rejection sampler for rho_Y did not accept");
}

PathSample PathSimulator::simulate(std::uint64_t replica) const {
  const long n = config_.n_steps();
  const int K = membrane_.dim();
  RandomStream rng_eta(config_.master_seed, replica, kStreamEta);
  RandomStream rng_b(config_.master_seed, replica, kStreamBrownian);
  RandomStream rng_init(config_.master_seed, replica, kStreamInit);

  PathSample path;
  path.dt = config_.dt;
  path.scale = scale_;
  path.replica = replica;
  path.x.resize(n + 1);
  if (config_.record_eta) path.eta.resize(K, n + 1);

  SurfaceState eta = sample_stationary(membrane_.modes(), membrane_.spectra(), rng_init);
  Vec2 x;
  if (config_.x0) {
    x = *config_.x0;
  } else {
    Vec2 y0;
    if (start_ && config_.regime == ScalingRegime::hom12()) {
      const double top = start_->bound(eta);
      for (long tries = 0;; ++tries) {
        if (tries > 10000000) throw std::runtime_error("rejection sampler for the start density did not accept");
        y0 = Vec2(rng_init.uniform(), rng_init.uniform());
        if (rng_init.uniform() * top <= start_->density(y0, eta)) break;
      }
    } else {
      y0 = sample_rho_y(eta, rng_init);
    }
    x = scale_ * y0;
  }

  const double dt = config_.dt, sdt = std::sqrt(dt);
  const double drift_scale = dt / scale_;
  path.x[0] = x;
  if (config_.record_eta) path.eta.col(0) = eta;
  LocalGeometry geo;
  for (long i = 0; i < n; ++i) {
    Vec2 y = x / scale_;
    y = y.array() - y.array().floor();
    Vec2 p = Vec2::Zero();
    Vec2 F = Vec2::Zero();
    if (K > 0) {
      geo = membrane_.local(y, eta);
      p = geo.grad;
      F = geo.drift;
    }
    const Vec2 xi(rng_b.normal(), rng_b.normal());
    x += drift_scale * F + sqrt_2sigma_from_grad(p) * (sdt * xi);
    stepper_.step_prepared(eta, rng_eta);
    path.x[i + 1] = x;
    if (config_.record_eta) path.eta.col(i + 1) = eta;
  }
  return path;
}

std::vector<PathSample> batch_simulate(const PathSimulator& sim, int workers) {
  return batch_map<PathSample>(sim, [](PathSample&& p) { return std::move(p); }, workers);
}

namespace {

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double d) { put_u64(os, std::bit_cast<std::uint64_t>(d)); }

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("truncated path dump");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

constexpr char kMagic[9] = "HLFPATH1";

}  // namespace

void write_path_binary(const PathSample& path, std::uint64_t config_hash, std::ostream& os) {
  os.write(kMagic, 8);
  put_u64(os, config_hash);
  put_u64(os, static_cast<std::uint64_t>(path.n_steps()));
  put_u64(os, static_cast<std::uint64_t>(path.eta.rows()));
  put_f64(os, path.dt);
  put_f64(os, path.scale);
  for (long i = 0; i <= path.n_steps(); ++i) {
    put_f64(os, path.time(i));
    put_f64(os, path.x[i][0]);
    put_f64(os, path.x[i][1]);
    for (long c = 0; c < path.eta.rows(); ++c) put_f64(os, path.eta(c, i));
  }
}

PathSample read_path_binary(std::istream& is, std::uint64_t* config_hash) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error("not a path dump");
  const std::uint64_t h = get_u64(is);
  if (config_hash) *config_hash = h;
  const long n = static_cast<long>(get_u64(is));
  const long K = static_cast<long>(get_u64(is));
  PathSample p;
  p.dt = get_f64(is);
  p.scale = get_f64(is);
  p.x.resize(n + 1);
  if (K > 0) p.eta.resize(K, n + 1);
  for (long i = 0; i <= n; ++i) {
    get_f64(is);
    p.x[i][0] = get_f64(is);
    p.x[i][1] = get_f64(is);
    for (long c = 0; c < K; ++c) p.eta(c, i) = get_f64(is);
  }
  return p;
}

void write_paths_csv(const std::vector<PathSample>& paths, long stride, std::ostream& os) {
  if (stride < 1) throw std::invalid_argument("stride must be positive");
  os << "replica,t,x1,x2,y1,y2\n";
  for (const auto& p : paths)
    for (long i = 0; i <= p.n_steps(); i += stride) {
      const Vec2 y = p.y(i);
      os << p.replica << ',' << fmt_double(p.time(i)) << ',' << fmt_double(p.x[i][0]) << ',' << fmt_double(p.x[i][1])
         << ',' << fmt_double(y[0]) << ',' << fmt_double(y[1]) << '\n';
    }
}

}  // namespace helfrich
