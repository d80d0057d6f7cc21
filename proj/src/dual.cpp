#include "flowsuper/dual.hpp"

#include <algorithm>
#include <cmath>

#include "flowsuper/errors.hpp"
#include "flowsuper/moments.hpp"
#include "flowsuper/parallel.hpp"

namespace flowsuper {

int JumpSkeleton::level_at(double s) const {
  const auto it = std::upper_bound(times.begin(), times.end(), s);
  return levels[static_cast<std::size_t>(it - times.begin())];
}

double JumpSkeleton::exponent() const {
  double acc = 0.0;
  double prev = 0.0;
  for (std::size_t j = 0; j <= times.size(); ++j) {
    const double end = j < times.size() ? times[j] : horizon;
    const double m = levels[j];
    acc += m * m * (end - prev);
    prev = end;
  }
  return 0.5 * acc;
}

JumpSkeleton sample_skeleton(int n0, double t, RandomStream& rng) {
  if (n0 < 1) throw Error(ErrorCode::LevelTooLow, "dual start level must be >= 1");
  if (t < 0.0) throw Error(ErrorCode::BadTimeOrder, "dual horizon must be >= 0");
  JumpSkeleton sk;
  sk.start_level = n0;
  sk.horizon = t;
  sk.levels.push_back(n0);
  double now = 0.0;
  int level = n0;
  for (;;) {
    now += 2.0 * rng.exponential() / (static_cast<double>(level) * level);
    if (now > t) break;
    const auto n = static_cast<std::uint64_t>(level);
    const std::uint64_t idx = rng.below(n * n);
    DualOperator op;
    if (idx < n * (n - 1)) {
      op.kind = DualOperatorKind::Coalesce;
      op.p = static_cast<int>(idx / (n - 1)) + 1;
      op.q = static_cast<int>(idx % (n - 1)) + 1;
      if (op.q >= op.p) ++op.q;
      --level;
    } else {
      op.kind = DualOperatorKind::Drift;
      op.p = static_cast<int>(idx - n * (n - 1)) + 1;
    }
    sk.times.push_back(now);
    sk.ops.push_back(op);
    sk.levels.push_back(level);
  }
  return sk;
}

double evaluate_dual_path(const JumpSkeleton& sk, const LevelFunction& h, const EmpiricalMeasure& mu,
                          const ValidatedModel& model, double dt_max, MotionScheme scheme, RandomStream& rng) {
  if (h.level != sk.start_level) throw Error(ErrorCode::DimensionMismatch, "dual: test function level != n0");
  if (mu.count() == 0) throw Error(ErrorCode::EmptyInitial, "dual: empty initial measure");
  const int k = sk.jumps();
  const int final_level = sk.final_level();

  // Forward in time from the last jump back to the first: start from
  // mu-normalised samples at level N_J, diffuse t - tau_J, apply Gamma_J, ...
  EulerWorkspace ws;
  DiffusionState st{Eigen::MatrixXd(model.d(), final_level), 0.0};
  for (int p = 0; p < final_level; ++p) st.points.col(p) = mu.atoms.col(static_cast<Eigen::Index>(rng.below(mu.count())));
  double weight = std::pow(mu.total_mass(), final_level);
  double upper = sk.horizon;
  for (int j = k - 1; j >= 0; --j) {
    const double tau = sk.times[static_cast<std::size_t>(j)];
    advance(st, model, upper - tau, dt_max, scheme, rng, ws);
    upper = tau;
    const auto& op = sk.ops[static_cast<std::size_t>(j)];
    if (op.kind == DualOperatorKind::Coalesce) {
      const double sg = model.sigma(st.points.col(st.count() - 1));
      weight *= sg * sg;
      st.points = coalesce_points(st.points, op.p, op.q);
    } else {
      weight *= 2.0 * model.gamma(st.points.col(op.p - 1));
    }
  }
  advance(st, model, upper, dt_max, scheme, rng, ws);
  const double expo = sk.exponent();
  const double cap = 0.5 * sk.start_level * sk.start_level * sk.horizon;
  if (expo > cap * (1.0 + 1e-12) + 1e-12) throw Error(ErrorCode::NonFinite, "dual exponent exceeds its hard bound");
  return weight * h(st.points) * std::exp(expo);
}

MomentEstimate dual_moment_estimate(const LevelFunction& h, const EmpiricalMeasure& mu, double t,
                                    const ValidatedModel& model, const DualSettings& settings,
                                    const StreamSource& source) {
  if (h.level < 1) throw Error(ErrorCode::LevelTooLow, "dual start level must be >= 1");
  if (mu.count() == 0) throw Error(ErrorCode::EmptyInitial, "dual: empty initial measure");
  std::vector<double> values(settings.paths);
  parallel_for(settings.paths, [&](std::size_t r) {
    auto rng = source.stream(r);
    const auto sk = sample_skeleton(h.level, t, rng);
    values[r] = evaluate_dual_path(sk, h, mu, model, settings.dt_max, settings.scheme, rng);
  });
  auto est = sample_estimate(values, Provenance::Dual);
  return est;
}

}  // namespace flowsuper
