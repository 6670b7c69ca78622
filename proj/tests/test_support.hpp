#ifndef HELFRICH_TEST_SUPPORT_HPP
#define HELFRICH_TEST_SUPPORT_HPP

#include <cmath>
#include <numbers>

#include "helfrich/membrane.hpp"
#include "helfrich/ou_process.hpp"
#include "helfrich/rng.hpp"

namespace helfrich::test {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline Vec2 random_point(RandomStream& r) { return Vec2(r.uniform(), r.uniform()); }

inline SurfaceState stationary_eta(const Membrane& m, RandomStream& r) {
  return sample_stationary(m.modes(), m.spectra(), r);
}

// Coordinate holding Re eta^k for wavevector k (its canonical member).
inline int re_coord(const Membrane& m, Wavevector k) {
  const ModeSet& s = m.modes();
  for (int i = 0; i < s.K(); ++i)
    if (s.wavevectors[i] == k) return s.real_index[i] - s.real_index[i] % 2;
  return -1;
}

inline double max_abs(const Mat2& a) { return a.cwiseAbs().maxCoeff(); }

}  // namespace helfrich::test

#endif
