#include "flowsuper/particles.hpp"

#include <algorithm>
#include <cmath>

#include "flowsuper/errors.hpp"
#include "flowsuper/parallel.hpp"

namespace flowsuper {
namespace {

int generation_index(int n, double t) { return static_cast<int>(std::floor(n * t + 1e-9)); }

}  // namespace

double EmpiricalMeasure::integrate(const TestFunction& h) const {
  double s = 0.0;
  for (int i = 0; i < count(); ++i) s += h.value(atoms.col(i));
  return weight * s;
}

ParticleLabel Population::label(int i) const {
  ParticleLabel l;
  l.ancestor = ancestors[static_cast<std::size_t>(i)];
  if (track_lineage) l.path = paths[static_cast<std::size_t>(i)];
  return l;
}

Population init_population(const ScaleSpec& scale, int d, RandomStream& rng, bool track_lineage) {
  if (scale.initial_count < 1) throw Error(ErrorCode::EmptyInitial, "K_n must be at least 1");
  if (scale.n < 1) throw Error(ErrorCode::ValidationError, "scale n must be at least 1");
  const int k = scale.initial_count;
  Population pop;
  pop.n = scale.n;
  pop.track_lineage = track_lineage;
  pop.positions.resize(d, k);
  const auto& pl = scale.placement;
  for (int i = 0; i < k; ++i) {
    switch (pl.kind) {
      case PlacementKind::Point:
        if (pl.at.size() != d) throw Error(ErrorCode::DimensionMismatch, "placement point has wrong dimension");
        pop.positions.col(i) = pl.at;
        break;
      case PlacementKind::Grid: {
        const double x = k == 1 ? 0.5 * (pl.lo + pl.hi) : pl.lo + (pl.hi - pl.lo) * i / (k - 1);
        pop.positions.col(i).setConstant(x);
        break;
      }
      case PlacementKind::Gaussian:
        if (pl.mean.size() != d) throw Error(ErrorCode::DimensionMismatch, "placement mean has wrong dimension");
        for (int j = 0; j < d; ++j) pop.positions(j, i) = pl.mean(j) + pl.sd * rng.normal();
        break;
      case PlacementKind::Explicit: {
        if (pl.points.empty()) throw Error(ErrorCode::EmptyInitial, "explicit placement has no points");
        const auto& x = pl.points[static_cast<std::size_t>(i) % pl.points.size()];
        if (x.size() != d) throw Error(ErrorCode::DimensionMismatch, "placement point has wrong dimension");
        pop.positions.col(i) = x;
        break;
      }
    }
  }
  pop.ancestors.resize(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) pop.ancestors[static_cast<std::size_t>(i)] = i + 1;
  if (track_lineage) pop.paths.assign(static_cast<std::size_t>(k), {});
  return pop;
}

int substeps_per_generation(int n, double dt_max) {
  if (!(dt_max > 0.0)) throw Error(ErrorCode::ValidationError, "dt_max must be positive");
  return std::max(1, static_cast<int>(std::ceil(1.0 / (n * dt_max) - 1e-9)));
}

OffspringLaw branching_law(const ValidatedModel& model, int n, const Eigen::Ref<const Eigen::VectorXd>& y) {
  const double mean = 1.0 + model.gamma(y) / n;
  const double s = model.sigma(y);
  return offspring_law(mean, std::max(s * s, lattice_min_variance(mean)));
}

Population step_generation(const Population& pop, const ValidatedModel& model, double dt_max, RandomStream& rng,
                           const StepOptions& options) {
  const int n = pop.n;
  const int d = model.d();
  const int substeps = substeps_per_generation(n, dt_max);
  const double dt = 1.0 / (static_cast<double>(n) * substeps);
  const double t0 = pop.time();

  DiffusionState state{pop.positions, t0};
  if (options.observer) options.observer(t0, state.points, 0);

  std::shared_ptr<const GaussianTransition> exact = options.exact;
  if (options.scheme == MotionScheme::Exact && !exact) exact = std::make_shared<GaussianTransition>(model, dt);

  EulerWorkspace ws;
  for (int k = 1; k <= substeps; ++k) {
    if (options.scheme == MotionScheme::Exact) {
      state = exact->sample(state, rng);
    } else {
      // One common increment per sub-step, shared by every particle.
      auto noise = NoiseIncrement::draw(rng, state.count(), d, model.m(), dt);
      em_step_inplace(state, model, noise, ws);
    }
    state.time = t0 + k * dt;
    if (options.observer) options.observer(state.time, state.points, k);
  }

  // Branching at the death positions, in label order.
  std::vector<int> counts(static_cast<std::size_t>(pop.count()));
  std::size_t total = 0;
  const bool uniform_law = model.has_constant_branching();
  OffspringLaw shared;
  if (uniform_law && pop.count() > 0) shared = branching_law(model, n, state.points.col(0));
  for (int i = 0; i < pop.count(); ++i) {
    const int k = uniform_law ? sample_offspring(shared, rng)
                              : sample_offspring(branching_law(model, n, state.points.col(i)), rng);
    counts[static_cast<std::size_t>(i)] = k;
    total += static_cast<std::size_t>(k);
  }
  if (total > options.population_cap) {
    throw Error(ErrorCode::PopulationExplosion,
                "population " + std::to_string(total) + " exceeds cap " + std::to_string(options.population_cap));
  }

  Population next;
  next.n = n;
  next.generation = pop.generation + 1;
  next.track_lineage = pop.track_lineage;
  next.positions.resize(d, static_cast<Eigen::Index>(total));
  next.ancestors.reserve(total);
  if (pop.track_lineage) next.paths.reserve(total);
  Eigen::Index col = 0;
  for (int i = 0; i < pop.count(); ++i) {
    for (int j = 1; j <= counts[static_cast<std::size_t>(i)]; ++j) {
      next.positions.col(col++) = state.points.col(i);
      next.ancestors.push_back(pop.ancestors[static_cast<std::size_t>(i)]);
      if (pop.track_lineage) {
        auto path = pop.paths[static_cast<std::size_t>(i)];
        path.push_back(static_cast<std::uint32_t>(j));
        next.paths.push_back(std::move(path));
      }
    }
  }
  return next;
}

namespace {

void record(TimeSeries& ts, std::size_t snap, const Population& pop, const std::vector<TestFunction>& observables) {
  const auto mu = pop.measure();
  ts.mass[snap] = mu.total_mass();
  auto& row = ts.values[snap];
  for (std::size_t j = 0; j < observables.size(); ++j) row[j] = mu.integrate(observables[j]);
}

StepOptions prepared(const ValidatedModel& model, int n, double dt_max, const StepOptions& options) {
  StepOptions out = options;
  if (out.scheme == MotionScheme::Exact && !out.exact) {
    const int substeps = substeps_per_generation(n, dt_max);
    out.exact = std::make_shared<GaussianTransition>(model, 1.0 / (static_cast<double>(n) * substeps));
  }
  return out;
}

}  // namespace

TimeSeries run_simulation(const ValidatedModel& model, const ScaleSpec& scale, const RunSpec& run, RandomStream& rng,
                          const StepOptions& options) {
  if (!(run.horizon > 0.0)) throw Error(ErrorCode::ValidationError, "horizon T must be positive");
  Population pop = init_population(scale, model.d(), rng);
  const int n = scale.n;
  TimeSeries ts;
  std::vector<int> snap_gen;
  for (double t : run.snap_times) {
    if (t < 0.0 || t > run.horizon + 1e-12) throw Error(ErrorCode::ValidationError, "snap time outside [0, T]");
    const int k = generation_index(n, t);
    snap_gen.push_back(k);
    ts.times.push_back(static_cast<double>(k) / n);
  }
  ts.mass.assign(snap_gen.size(), 0.0);
  ts.values.assign(snap_gen.size(), std::vector<double>(run.observables.size(), 0.0));
  const int last = snap_gen.empty() ? 0 : *std::max_element(snap_gen.begin(), snap_gen.end());
  const StepOptions opts = prepared(model, n, run.dt_max, options);
  for (int gen = 0;; ++gen) {
    for (std::size_t s = 0; s < snap_gen.size(); ++s)
      if (snap_gen[s] == gen) record(ts, s, pop, run.observables);
    if (gen >= last || pop.count() == 0) break;
    pop = step_generation(pop, model, run.dt_max, rng, opts);
  }
  return ts;
}

std::vector<TimeSeries> simulate_replicates(const ValidatedModel& model, const ScaleSpec& scale, const RunSpec& run,
                                            std::size_t replicates, const StreamSource& source,
                                            const StepOptions& options) {
  ScaleSpec fixed = scale;
  if (scale.placement.kind == PlacementKind::Gaussian) {
    auto prng = source.child("placement").stream(0);
    Population init = init_population(scale, model.d(), prng);
    fixed.placement.kind = PlacementKind::Explicit;
    fixed.placement.points.clear();
    for (int i = 0; i < init.count(); ++i) fixed.placement.points.emplace_back(init.positions.col(i));
  }
  const StepOptions opts = prepared(model, scale.n, run.dt_max, options);
  std::vector<TimeSeries> out(replicates);
  parallel_for(replicates, [&](std::size_t r) {
    auto rng = source.stream(r);
    out[r] = run_simulation(model, fixed, run, rng, opts);
  });
  return out;
}

namespace {

double observable_value(const TimeSeries& ts, std::size_t snap, int obs) {
  if (obs == kTotalMass) return ts.mass[snap];
  return ts.values[snap].at(static_cast<std::size_t>(obs));
}

std::size_t find_snap(const TimeSeries& ts, double t) {
  // Snapshot times are already on the generation grid; match to the nearest.
  std::size_t best = ts.times.size();
  double best_gap = 1e-9;
  for (std::size_t s = 0; s < ts.times.size(); ++s) {
    const double gap = std::abs(ts.times[s] - t);
    if (gap <= best_gap) {
      best = s;
      best_gap = gap;
    }
  }
  if (best == ts.times.size()) throw Error(ErrorCode::ValidationError, "no snapshot at t=" + std::to_string(t));
  return best;
}

}  // namespace

MomentEstimate product_moment_estimate(const std::vector<TimeSeries>& runs, const std::vector<double>& times,
                                       const std::vector<int>& observables) {
  if (runs.size() < 2) throw Error(ErrorCode::InsufficientReplicates, "need at least 2 replicates");
  if (times.size() != observables.size()) throw Error(ErrorCode::DimensionMismatch, "one time per factor");
  std::vector<double> samples(runs.size());
  for (std::size_t r = 0; r < runs.size(); ++r) {
    double prod = 1.0;
    for (std::size_t i = 0; i < observables.size(); ++i) prod *= observable_value(runs[r], find_snap(runs[r], times[i]), observables[i]);
    samples[r] = prod;
  }
  return sample_estimate(samples, Provenance::Particle);
}

MomentEstimate product_moment_estimate(const std::vector<TimeSeries>& runs, double t, const std::vector<int>& observables) {
  if (runs.empty()) throw Error(ErrorCode::InsufficientReplicates, "need at least 2 replicates");
  // Round t to the generation grid using the first replicate's snapshot spacing.
  double snapped = t;
  double best = 1e300;
  for (double s : runs.front().times) {
    if (s <= t + 1e-9 && t - s < best) {
      best = t - s;
      snapped = s;
    }
  }
  return product_moment_estimate(runs, std::vector<double>(observables.size(), snapped), observables);
}

namespace {

class MartingaleAccumulator {
 public:
  MartingaleAccumulator(const ValidatedModel& model, const std::vector<TestFunction>& fs, double unit_mass)
      : model_(model), fs_(fs), w_(unit_mass), drift_int_(fs.size(), 0.0), qv_int_(fs.size(), 0.0),
        prev_drift_(fs.size(), 0.0), prev_qv_(fs.size(), 0.0) {
    const int d = model.d();
    const int m = model.m();
    b_.resize(d, 1);
    e_.resize(d, d);
    c_.resize(d, m);
    diffusion_.resize(d, d);
    grad_.resize(d);
    hess_.resize(d, d);
    common_.assign(fs.size(), Eigen::VectorXd::Zero(m));
  }

  void observe(double t, const Eigen::MatrixXd& pts, int substep) {
    std::vector<double> drift(fs_.size(), 0.0), qv(fs_.size(), 0.0);
    densities(pts, drift, qv);
    if (substep > 0) {
      const double h = t - prev_t_;
      for (std::size_t j = 0; j < fs_.size(); ++j) {
        drift_int_[j] += 0.5 * h * (drift[j] + prev_drift_[j]);
        qv_int_[j] += 0.5 * h * (qv[j] + prev_qv_[j]);
      }
    }
    prev_t_ = t;
    prev_drift_ = std::move(drift);
    prev_qv_ = std::move(qv);
  }

  std::vector<double> functionals(const Eigen::MatrixXd& pts) const {
    std::vector<double> out(fs_.size(), 0.0);
    for (std::size_t j = 0; j < fs_.size(); ++j)
      for (Eigen::Index i = 0; i < pts.cols(); ++i) out[j] += w_ * fs_[j].value(pts.col(i));
    return out;
  }

  const std::vector<double>& drift_integral() const { return drift_int_; }
  const std::vector<double>& qv_integral() const { return qv_int_; }

 private:
  void densities(const Eigen::MatrixXd& pts, std::vector<double>& drift, std::vector<double>& qv) {
    const auto& spec = model_.spec();
    for (auto& v : common_) v.setZero();
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
      const auto x = pts.col(i);
      const double g = model_.gamma(x);
      const double s = model_.sigma(x);
      spec.b.evaluate_into(x, b_);
      spec.e.evaluate_into(x, e_);
      spec.c.evaluate_into(x, c_);
      diffusion_.noalias() = e_ * e_.transpose();
      diffusion_.noalias() += c_ * c_.transpose();
      for (std::size_t j = 0; j < fs_.size(); ++j) {
        const double fx = fs_[j].slots().front().derivatives(x, grad_, hess_);
        drift[j] += w_ * (b_.col(0).dot(grad_) + 0.5 * diffusion_.cwiseProduct(hess_).sum() + g * fx);
        qv[j] += w_ * s * s * fx * fx;
        common_[j].noalias() += w_ * c_.transpose() * grad_;
      }
    }
    // (X x X)(Lambda f) = sum_l (X(sum_i c_il d_i f))^2
    for (std::size_t j = 0; j < fs_.size(); ++j) qv[j] += common_[j].squaredNorm();
  }

  const ValidatedModel& model_;
  const std::vector<TestFunction>& fs_;
  double w_;
  std::vector<double> drift_int_, qv_int_, prev_drift_, prev_qv_;
  double prev_t_ = 0.0;
  Eigen::MatrixXd b_, e_, c_, diffusion_, hess_;
  Eigen::VectorXd grad_;
  std::vector<Eigen::VectorXd> common_;
};

}  // namespace

MartingaleTrace martingale_run(const ValidatedModel& model, const ScaleSpec& scale, double dt_max,
                               const std::vector<TestFunction>& fs, const std::vector<double>& check_times,
                               RandomStream& rng, const StepOptions& options) {
  for (const auto& f : fs)
    if (f.level() != 1) throw Error(ErrorCode::DimensionMismatch, "martingale test functions live on E");
  Population pop = init_population(scale, model.d(), rng);
  const int n = scale.n;
  MartingaleAccumulator acc(model, fs, pop.unit_mass());
  StepOptions opts = prepared(model, n, dt_max, options);
  opts.observer = [&acc](double t, const Eigen::MatrixXd& pts, int k) { acc.observe(t, pts, k); };

  MartingaleTrace trace;
  std::vector<int> gens;
  for (double t : check_times) {
    gens.push_back(generation_index(n, t));
    trace.times.push_back(static_cast<double>(gens.back()) / n);
  }
  trace.z.setZero(static_cast<Eigen::Index>(check_times.size()), static_cast<Eigen::Index>(fs.size()));
  trace.qv.setZero(trace.z.rows(), trace.z.cols());
  const auto initial = acc.functionals(pop.positions);
  const int last = gens.empty() ? 0 : *std::max_element(gens.begin(), gens.end());
  for (int gen = 0;; ++gen) {
    for (std::size_t k = 0; k < gens.size(); ++k) {
      if (gens[k] != gen) continue;
      const auto now = acc.functionals(pop.positions);
      for (std::size_t j = 0; j < fs.size(); ++j) {
        trace.z(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = now[j] - initial[j] - acc.drift_integral()[j];
        trace.qv(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = acc.qv_integral()[j];
      }
    }
    if (gen >= last) break;
    pop = step_generation(pop, model, dt_max, rng, opts);
  }
  return trace;
}

}  // namespace flowsuper
