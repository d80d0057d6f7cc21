#pragma once

#include <vector>

#include "flowsuper/estimate.hpp"
#include "flowsuper/model.hpp"
#include "flowsuper/particles.hpp"
#include "flowsuper/rng.hpp"
#include "flowsuper/sde.hpp"
#include "flowsuper/test_function.hpp"

namespace flowsuper {

enum class DualOperatorKind { Coalesce, Drift };

/// Coalesce(p, q) merges coordinates p != q; Drift(p) multiplies by 2 gamma(y_p).
/// Indices are 1-based.
struct DualOperator {
  DualOperatorKind kind = DualOperatorKind::Drift;
  int p = 1;
  int q = 0;
};

/// Jump times and operators of the level process on [0, horizon].
/// levels[j] is the level after the j-th jump; levels has one more entry
/// than times, levels[0] being the start level.
struct JumpSkeleton {
  int start_level = 1;
  double horizon = 0.0;
  std::vector<double> times;
  std::vector<DualOperator> ops;
  std::vector<int> levels;

  int jumps() const noexcept { return static_cast<int>(times.size()); }
  int final_level() const noexcept { return levels.back(); }
  int level_at(double s) const;
  /// (1/2) int_0^horizon M(s)^2 ds
  double exponent() const;
};

/// Level N waits 2 Exp(1) / N^2, then applies one of the N^2 operators uniformly.
JumpSkeleton sample_skeleton(int n0, double t, RandomStream& rng);

/// Single-path value of the dual representation.
double evaluate_dual_path(const JumpSkeleton& skeleton, const LevelFunction& h, const EmpiricalMeasure& mu,
                          const ValidatedModel& model, double dt_max, MotionScheme scheme, RandomStream& rng);

struct DualSettings {
  std::size_t paths = 10000;
  double dt_max = 0.01;
  MotionScheme scheme = MotionScheme::Euler;
};

/// E <h, X_t^{n0}> from independent dual paths; path r uses source.stream(r)
/// for both its skeleton and its motion.
MomentEstimate dual_moment_estimate(const LevelFunction& h, const EmpiricalMeasure& mu, double t,
                                    const ValidatedModel& model, const DualSettings& settings,
                                    const StreamSource& source);

}  // namespace flowsuper
