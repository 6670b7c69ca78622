#include "helfrich/rough_lift.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace helfrich {

const char* flavor_name(Flavor f) { return f == Flavor::Ito ? "ito" : "stratonovich"; }

std::vector<GridPair> dyadic_pairs(long n_steps, long max_pairs) {
  if (n_steps < 1) throw std::invalid_argument("path has no steps");
  int top = 0;
  while ((2L << top) <= n_steps) ++top;
  auto count_from = [&](int m0) {
    long c = 0;
    for (int m = m0; m <= top; ++m) c += n_steps >> m;
    return c + 1;
  };
  int m0 = 0;
  while (m0 < top && count_from(m0) > max_pairs) ++m0;
  std::vector<GridPair> pairs;
  for (int m = m0; m <= top; ++m) {
    const long len = 1L << m;
    for (long s = 0; s + len <= n_steps; s += len) pairs.push_back({s, s + len});
  }
  if ((1L << top) != n_steps) pairs.push_back({0, n_steps});
  return pairs;
}

RoughPathLift::RoughPathLift(const PathSample& path, Flavor flavor, std::vector<GridPair> pairs)
    : flavor_(flavor), dt_(path.dt), pairs_(std::move(pairs)) {
  const long n = path.n_steps();
  if (n < 1) throw std::invalid_argument("path has no steps");
  inc_.resize(n);
  p1_.assign(n + 1, 0.0L);
  p2_.assign(n + 1, 0.0L);
  for (long u = 0; u < n; ++u) {
    inc_[u] = path.x[u + 1] - path.x[u];
    p1_[u + 1] = p1_[u] + inc_[u][0];
    p2_[u + 1] = p2_[u] + inc_[u][1];
  }
  level2_.reserve(pairs_.size());
  for (size_t i = 0; i < pairs_.size(); ++i) {
    check(pairs_[i].s, pairs_[i].t);
    level2_.push_back(compute(pairs_[i].s, pairs_[i].t));
    lookup_[pairs_[i]] = i;
  }
}

void RoughPathLift::check(long s, long t) const {
  if (s < 0 || t > n_steps() || s > t) throw std::out_of_range("pair endpoints off the simulation grid");
}

Vec2 RoughPathLift::increment(long s, long t) const {
  check(s, t);
  return Vec2(double(p1_[t] - p1_[s]), double(p2_[t] - p2_[s]));
}

Mat2 RoughPathLift::compute(long s, long t) const {
  long double a11 = 0, a12 = 0, a21 = 0, a22 = 0;
  const long double w = flavor_ == Flavor::Ito ? 0.0L : 0.5L;
  for (long u = s; u < t; ++u) {
    const long double d1 = inc_[u][0], d2 = inc_[u][1];
    const long double z1 = p1_[u] - p1_[s] + w * d1;
    const long double z2 = p2_[u] - p2_[s] + w * d2;
    a11 += z1 * d1;
    a12 += z1 * d2;
    a21 += z2 * d1;
    a22 += z2 * d2;
  }
  Mat2 m;
  m << double(a11), double(a12), double(a21), double(a22);
  return m;
}

Mat2 RoughPathLift::level2(long s, long t) const {
  check(s, t);
  auto it = lookup_.find({s, t});
  if (it != lookup_.end()) return level2_[it->second];
  return compute(s, t);
}

Mat2 RoughPathLift::bracket(long s, long t) const {
  check(s, t);
  long double b11 = 0, b12 = 0, b22 = 0;
  for (long u = s; u < t; ++u) {
    b11 += (long double)inc_[u][0] * inc_[u][0];
    b12 += (long double)inc_[u][0] * inc_[u][1];
    b22 += (long double)inc_[u][1] * inc_[u][1];
  }
  Mat2 m;
  m << double(0.5L * b11), double(0.5L * b12), double(0.5L * b12), double(0.5L * b22);
  return m;
}

RoughPathLift ito_lift(const PathSample& path, const std::vector<GridPair>& pairs) {
  return RoughPathLift(path, Flavor::Ito, pairs);
}

RoughPathLift strato_lift(const PathSample& path, const std::vector<GridPair>& pairs) {
  return RoughPathLift(path, Flavor::Stratonovich, pairs);
}

Mat2 chen_defect(const RoughPathLift& lift, long r, long s, long t) {
  if (!(r <= s && s <= t)) throw std::invalid_argument("chen_defect needs r <= s <= t");
  return lift.level2(r, t) - lift.level2(r, s) - lift.level2(s, t) -
         lift.increment(r, s) * lift.increment(s, t).transpose();
}

double chen_relative_defect(const RoughPathLift& lift, long r, long s, long t) {
  const Mat2 d = chen_defect(lift, r, s, t);
  const double scale = std::max({lift.level2(r, t).cwiseAbs().maxCoeff(), lift.level2(r, s).cwiseAbs().maxCoeff(),
                                 lift.level2(s, t).cwiseAbs().maxCoeff(),
                                 (lift.increment(r, s) * lift.increment(s, t).transpose()).cwiseAbs().maxCoeff()});
  const double num = d.cwiseAbs().maxCoeff();
  return scale > 0.0 ? num / scale : num;
}

HolderReport holder_norms(const RoughPathLift& lift, double gamma) {
  if (!(gamma > 1.0 / 3.0 && gamma < 0.5)) throw std::invalid_argument("gamma must lie in (1/3, 1/2)");
  HolderReport r;
  r.gamma = gamma;
  const auto& pairs = lift.pairs();
  for (size_t i = 0; i < pairs.size(); ++i) {
    const double h = (pairs[i].t - pairs[i].s) * lift.grid_dt();
    r.norm_x = std::max(r.norm_x, lift.increment(pairs[i].s, pairs[i].t).norm() / std::pow(h, gamma));
    r.norm_xx = std::max(r.norm_xx, lift.second_level()[i].norm() / std::pow(h, 2.0 * gamma));
  }
  return r;
}

UCVReport ucv_diagnostics(const PathSample& path, const Membrane& membrane, const ScalingRegime& regime,
                          double epsilon) {
  if (membrane.dim() > 0 && path.eta.cols() != static_cast<long>(path.x.size()))
    throw std::invalid_argument("ucv_diagnostics needs a path recorded with eta");
  const double s = std::pow(epsilon, regime.alpha);
  UCVReport r;
  for (long u = 0; u < path.n_steps(); ++u) {
    if (membrane.dim() == 0) {
      r.expected_qv += Vec2(2.0, 2.0) * path.dt;
      continue;
    }
    const SurfaceState eta = path.eta.col(u);
    const LocalGeometry g = membrane.local(path.y(u), eta);
    r.expected_tv += path.dt * g.drift.norm() / s;
    r.expected_qv += 2.0 * path.dt * g.sigma.diagonal();
  }
  return r;
}

void write_lift_csv(const RoughPathLift& lift, std::ostream& os, bool header) {
  if (header) os << "s,t,xx11,xx12,xx21,xx22,flavor\n";
  for (size_t i = 0; i < lift.pairs().size(); ++i) {
    const auto& p = lift.pairs()[i];
    const Mat2& m = lift.second_level()[i];
    os << fmt_double(p.s * lift.grid_dt()) << ',' << fmt_double(p.t * lift.grid_dt()) << ',' << fmt_double(m(0, 0))
       << ',' << fmt_double(m(0, 1)) << ',' << fmt_double(m(1, 0)) << ',' << fmt_double(m(1, 1)) << ','
       << flavor_name(lift.flavor()) << '\n';
  }
}

}  // namespace helfrich
