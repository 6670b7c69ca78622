#ifndef HELFRICH_ROUGH_LIFT_HPP
#define HELFRICH_ROUGH_LIFT_HPP

/// Level-2 lifts of discrete particle paths (Ito and Stratonovich sums) with
/// Chen, Hoelder and UCV diagnostics.

#include <iosfwd>
#include <map>
#include <utility>
#include <vector>

#include "helfrich/sde_sim.hpp"

namespace helfrich {

enum class Flavor { Ito, Stratonovich };
const char* flavor_name(Flavor f);

/// Grid indices s < t.
struct GridPair {
  long s = 0;
  long t = 0;
  bool operator<(const GridPair& o) const { return s != o.s ? s < o.s : t < o.t; }
  bool operator==(const GridPair& o) const = default;
};

/// Pairs with t-s = 2^m steps, s on the 2^m lattice, coarse enough to stay within
/// max_pairs; the full interval is always included.
std::vector<GridPair> dyadic_pairs(long n_steps, long max_pairs = 4096);

class RoughPathLift {
 public:
  RoughPathLift(const PathSample& path, Flavor flavor, std::vector<GridPair> pairs);

  Flavor flavor() const { return flavor_; }
  double grid_dt() const { return dt_; }
  long n_steps() const { return static_cast<long>(inc_.size()); }
  const std::vector<GridPair>& pairs() const { return pairs_; }
  /// Second level on the configured pairs, same order as pairs().
  const std::vector<Mat2>& second_level() const { return level2_; }

  /// X_{s,t} for any grid indices.
  Vec2 increment(long s, long t) const;
  /// Level-2 value for any grid indices (stored value if (s,t) is a configured pair).
  Mat2 level2(long s, long t) const;
  /// 1/2 sum over substeps of dX dX^T on [s,t).
  Mat2 bracket(long s, long t) const;

 private:
  void check(long s, long t) const;
  Mat2 compute(long s, long t) const;

  Flavor flavor_;
  double dt_;
  std::vector<Vec2> inc_;
  std::vector<long double> p1_, p2_;  // cumulative sums of increments
  std::vector<GridPair> pairs_;
  std::vector<Mat2> level2_;
  std::map<GridPair, size_t> lookup_;
};

RoughPathLift ito_lift(const PathSample& path, const std::vector<GridPair>& pairs);
RoughPathLift strato_lift(const PathSample& path, const std::vector<GridPair>& pairs);

/// X_{r,t} - X_{r,s} - X_{s,t} - X_{r,s} (x) X_{s,t}.
Mat2 chen_defect(const RoughPathLift& lift, long r, long s, long t);
/// Max-entry defect divided by the largest max-entry among the four terms.
double chen_relative_defect(const RoughPathLift& lift, long r, long s, long t);

struct HolderReport {
  double gamma = 0.4;
  double norm_x = 0.0;
  double norm_xx = 0.0;
};

/// Grid Hoelder norms over the lift's pairs (Euclidean / Frobenius).
HolderReport holder_norms(const RoughPathLift& lift, double gamma);

struct UCVReport {
  Vec2 expected_qv = Vec2::Zero();
  double expected_tv = 0.0;
};

/// Needs a path recorded with eta.
UCVReport ucv_diagnostics(const PathSample& path, const Membrane& membrane, const ScalingRegime& regime,
                          double epsilon);

/// One row per pair: s,t,xx11,xx12,xx21,xx22,flavor (times in model units).
void write_lift_csv(const RoughPathLift& lift, std::ostream& os, bool header = true);

}  // namespace helfrich

#endif
