#include "flowsuper/harness.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include "flowsuper/dual.hpp"
#include "flowsuper/errors.hpp"
#include "flowsuper/gaussian_form.hpp"
#include "flowsuper/moments.hpp"
#include "flowsuper/parallel.hpp"

namespace flowsuper {

namespace {

std::string fmt(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

bool within(double deviation, double cap, Side side) {
  switch (side) {
    case Side::TwoSided: return std::abs(deviation) <= cap;
    case Side::Upper: return deviation <= cap;
    case Side::Lower: return -deviation <= cap;
  }
  return false;
}

bool closed_available(const ValidatedModel& model) { return model.is_affine() && model.has_constant_branching(); }

StepOptions step_options(const Scenario& sc) {
  StepOptions o;
  o.scheme = sc.scheme;
  o.population_cap = sc.population_cap;
  return o;
}

std::vector<TimeSeries> particle_runs(const Scenario& sc, const std::vector<TestFunction>& obs,
                                      const std::vector<double>& snaps, std::string_view tag) {
  RunSpec run;
  run.dt_max = sc.dt_max;
  run.observables = obs;
  run.snap_times = snaps;
  run.horizon = 1.0 / sc.scale.n;
  for (double s : snaps) run.horizon = std::max(run.horizon, s);
  return simulate_replicates(sc.model, initial_scale(sc), run, sc.replicates, sc.source(tag), step_options(sc));
}

DualSettings dual_settings(const Scenario& sc) { return DualSettings{sc.dual_paths, sc.dt_max, sc.scheme}; }

FormulaSettings formula_settings(const Scenario& sc, FormulaBackend backend) {
  FormulaSettings f;
  f.backend = backend;
  f.outer_nodes = sc.outer_nodes;
  f.inner_nodes = sc.inner_nodes;
  f.paths = PathSettings{sc.formula_paths, sc.dt_max, sc.scheme};
  return f;
}

// Sample variance with the large-sample standard error sqrt((m4 - s^4) / R).
MomentEstimate variance_estimate(const std::vector<double>& x) {
  const std::size_t r = x.size();
  if (r < 2) throw Error(ErrorCode::InsufficientReplicates, "need at least 2 samples");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(r);
  double m2 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d2 = (v - mean) * (v - mean);
    m2 += d2;
    m4 += d2 * d2;
  }
  const double s2 = m2 / static_cast<double>(r - 1);
  m4 /= static_cast<double>(r);
  MomentEstimate e;
  e.value = s2;
  e.std_error = std::sqrt(std::max(0.0, m4 - s2 * s2) / static_cast<double>(r));
  e.provenance = Provenance::Particle;
  e.replicates = r;
  return e;
}

std::vector<MartingaleTrace> martingale_traces(const Scenario& sc, const std::vector<TestFunction>& fs,
                                               const std::vector<double>& times) {
  const ScaleSpec scale = initial_scale(sc);
  const StepOptions opts = step_options(sc);
  const StreamSource src = sc.source("martingale");
  std::vector<MartingaleTrace> traces(sc.replicates);
  parallel_for(sc.replicates, [&](std::size_t r) {
    auto rng = src.stream(r);
    traces[r] = martingale_run(sc.model, scale, sc.dt_max, fs, times, rng, opts);
  });
  return traces;
}

std::vector<double> column(const std::vector<MartingaleTrace>& traces, bool qv, Eigen::Index k, Eigen::Index j) {
  std::vector<double> out;
  out.reserve(traces.size());
  for (const auto& tr : traces) out.push_back(qv ? tr.qv(k, j) : tr.z(k, j));
  return out;
}

}  // namespace

VerificationCheck make_check(std::string name, const MomentEstimate& estimate, const MomentEstimate& reference,
                             const Tolerance& tolerance) {
  VerificationCheck c;
  c.name = std::move(name);
  c.estimate = estimate;
  c.reference = reference;
  c.tolerance = tolerance;
  const double se = std::max(std::hypot(estimate.std_error, reference.std_error), kStdErrorFloor);
  const double dev = estimate.value - reference.value;
  c.z = dev / se;
  if (reference.value != 0.0)
    c.relative_error = std::abs(dev) / std::abs(reference.value);
  else
    c.relative_error = dev == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  bool ok = std::isfinite(estimate.value) && std::isfinite(reference.value);
  if (tolerance.z_threshold) ok = ok && within(c.z, *tolerance.z_threshold, tolerance.side);
  if (tolerance.relative_cap) ok = ok && c.relative_error <= *tolerance.relative_cap;
  if (tolerance.absolute_cap) ok = ok && within(dev, *tolerance.absolute_cap, tolerance.side);
  c.pass = ok;
  return c;
}

bool VerificationReport::passed() const {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

EmpiricalMeasure initial_measure(const Scenario& sc) {
  auto rng = sc.source("placement").stream(0);
  const Population pop = init_population(sc.scale, sc.model.d(), rng);
  return pop.measure();
}

ScaleSpec initial_scale(const Scenario& sc) {
  ScaleSpec fixed = sc.scale;
  if (fixed.placement.kind == PlacementKind::Gaussian) {
    const EmpiricalMeasure nu = initial_measure(sc);
    fixed.placement.kind = PlacementKind::Explicit;
    fixed.placement.points.clear();
    for (int i = 0; i < nu.count(); ++i) fixed.placement.points.emplace_back(nu.atoms.col(i));
  }
  return fixed;
}

double snapped_time(const Scenario& sc, double t) {
  if (t < 0.0) throw Error(ErrorCode::ValidationError, "time must be nonnegative");
  const int n = sc.scale.n;
  return std::floor(n * t + 1e-9) / n;
}

VerificationReport verify_first_moment(const Scenario& sc, const TestFunction& h, double t, const Tolerance& tol) {
  if (h.level() != 1) throw Error(ErrorCode::DimensionMismatch, "first moment needs a level-1 test function");
  const double ts = snapped_time(sc, t);
  const EmpiricalMeasure nu = initial_measure(sc);

  MomentEstimate formula;
  if (closed_available(sc.model)) {
    formula = closed_form_first_moment(h, nu, ts, sc.model);
  } else {
    FormulaSettings fs = formula_settings(sc, FormulaBackend::MonteCarlo);
    if (fs.paths.paths == 0) fs.paths.paths = sc.dual_paths;
    formula = moment_formula(h, nu, ts, sc.model, fs, sc.source("formula"));
  }
  const auto runs = particle_runs(sc, {h}, {ts}, "particle");
  const MomentEstimate particle = product_moment_estimate(runs, ts, {0});
  const MomentEstimate dual =
      dual_moment_estimate(as_level_function(h), nu, ts, sc.model, dual_settings(sc), sc.source("dual"));

  VerificationReport rep;
  rep.suite = "first-moment";
  const std::string at = " t=" + fmt(ts);
  rep.checks.push_back(make_check("particle vs formula" + at, particle, formula, tol));
  rep.checks.push_back(make_check("dual vs formula" + at, dual, formula, tol));
  rep.checks.push_back(make_check("particle vs dual" + at, particle, dual, tol));
  return rep;
}

VerificationReport verify_second_moment(const Scenario& sc, const TestFunction& h1, const TestFunction& h2, double s,
                                        double t, const Tolerance& tol, double analytic_relative_cap) {
  if (h1.level() != 1 || h2.level() != 1)
    throw Error(ErrorCode::DimensionMismatch, "second moment needs level-1 test functions");
  if (s > t) throw Error(ErrorCode::BadTimeOrder, "need s <= t");
  const double ss = snapped_time(sc, s);
  const double ts = snapped_time(sc, t);
  const bool same = ss == ts;
  const EmpiricalMeasure nu = initial_measure(sc);
  const bool closed = closed_available(sc.model);
  const std::string at = " s=" + fmt(ss) + " t=" + fmt(ts);

  VerificationReport rep;
  rep.suite = "second-moment";
  const TestFunction pair = TestFunction::tensor({h1, h2});

  std::optional<MomentEstimate> reference;
  if (closed) {
    const ClosedFormResult cf = closed_form_second_moment(h1, h2, ss, ts, nu, sc.model, sc.outer_nodes);
    reference = cf.estimate;
    if (same) {
      const MomentEstimate mf =
          moment_formula(pair, nu, ts, sc.model, formula_settings(sc, FormulaBackend::Closed), sc.source("formula"));
      rep.checks.push_back(make_check("recursion vs corollary" + at, mf, cf.estimate,
                                      Tolerance{std::nullopt, analytic_relative_cap, std::nullopt, Side::TwoSided}));
    }
  }
  if (same && sc.formula_paths > 0) {
    const MomentEstimate mc = moment_formula(pair, nu, ts, sc.model, formula_settings(sc, FormulaBackend::MonteCarlo),
                                             sc.source("formula-mc"));
    if (reference)
      rep.checks.push_back(make_check("recursion-mc vs corollary" + at, mc, *reference, tol));
    else
      reference = mc;
  }

  LevelFunction dual_h;
  if (same) {
    dual_h = as_level_function(pair);
  } else {
    // E X_s(h1) X_t(h2) = E <h1 (x) T_{t-s} h2, X_s^2>
    if (!closed) throw Error(ErrorCode::NotClosedForm, "mixed-time dual check needs affine motion and constant rates");
    const ClosedFormFunction g =
        feynman_kac_closed(ClosedFormFunction::from_test_function(h2), ts - ss, sc.model);
    dual_h = ClosedFormFunction::from_test_function(h1).tensor(g).as_level_function();
  }
  const MomentEstimate dual = dual_moment_estimate(dual_h, nu, ss, sc.model, dual_settings(sc), sc.source("dual"));

  const auto runs = particle_runs(sc, {h1, h2}, same ? std::vector<double>{ts} : std::vector<double>{ss, ts},
                                  "particle");
  const MomentEstimate particle = product_moment_estimate(runs, {ss, ts}, {0, 1});

  if (reference) {
    rep.checks.push_back(make_check("particle vs formula" + at, particle, *reference, tol));
    rep.checks.push_back(make_check("dual vs formula" + at, dual, *reference, tol));
  }
  rep.checks.push_back(make_check("particle vs dual" + at, particle, dual, tol));
  return rep;
}

VerificationReport verify_laplace(const Scenario& sc, const std::vector<double>& rhos, double t,
                                  const Tolerance& tol) {
  if (!sc.model.has_constant_branching())
    throw Error(ErrorCode::NotClosedForm, "Laplace check needs constant gamma and sigma");
  const Eigen::VectorXd origin = Eigen::VectorXd::Zero(sc.model.d());
  const double gamma = sc.model.gamma(origin);
  const double sigma = sc.model.sigma(origin);
  const double ts = snapped_time(sc, t);
  const double x0 = initial_measure(sc).total_mass();
  const auto runs = particle_runs(sc, {}, {ts}, "particle");

  VerificationReport rep;
  rep.suite = "laplace";
  for (double rho : rhos) {
    std::vector<double> samples;
    samples.reserve(runs.size());
    for (const auto& r : runs) samples.push_back(std::exp(-rho * r.mass.front()));
    const MomentEstimate emp = sample_estimate(samples, Provenance::Particle);
    MomentEstimate ref;
    ref.value = mass_laplace(rho, ts, gamma, sigma, x0);
    rep.checks.push_back(make_check("rho=" + fmt(rho) + " t=" + fmt(ts), emp, ref, tol));
  }
  return rep;
}

VerificationReport verify_martingale(const Scenario& sc, const std::vector<TestFunction>& fs,
                                     const std::vector<double>& times, const Tolerance& tol,
                                     double qv_relative_cap) {
  const auto traces = martingale_traces(sc, fs, times);
  VerificationReport rep;
  rep.suite = "martingale";
  const MomentEstimate zero{};
  const MartingaleTrace& first = traces.front();
  for (Eigen::Index k = 0; k < first.z.rows(); ++k) {
    for (Eigen::Index j = 0; j < first.z.cols(); ++j) {
      const std::string tag = " f" + std::to_string(j) + " t=" + fmt(first.times[static_cast<std::size_t>(k)]);
      const auto z = column(traces, false, k, j);
      rep.checks.push_back(make_check("mean Z" + tag, sample_estimate(z, Provenance::Particle), zero, tol));
      rep.checks.push_back(make_check("var Z vs QV" + tag, variance_estimate(z),
                                      sample_estimate(column(traces, true, k, j), Provenance::Particle),
                                      Tolerance{std::nullopt, qv_relative_cap, std::nullopt, Side::TwoSided}));
    }
  }
  return rep;
}

VerificationReport verify_common_noise(const Scenario& without, const Scenario& with,
                                       const std::vector<TestFunction>& fs, double t, double qv_relative_cap) {
  const auto a = martingale_traces(without, fs, {t});
  const auto b = martingale_traces(with, fs, {t});
  VerificationReport rep;
  rep.suite = "common-noise";
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(fs.size()); ++j) {
    const MomentEstimate va = variance_estimate(column(a, false, 0, j));
    const MomentEstimate vb = variance_estimate(column(b, false, 0, j));
    const MomentEstimate qa = sample_estimate(column(a, true, 0, j), Provenance::Particle);
    const MomentEstimate qb = sample_estimate(column(b, true, 0, j), Provenance::Particle);
    MomentEstimate dv = vb;
    dv.value = vb.value - va.value;
    dv.std_error = std::hypot(va.std_error, vb.std_error);
    MomentEstimate dq = qb;
    dq.value = qb.value - qa.value;
    dq.std_error = std::hypot(qa.std_error, qb.std_error);
    const std::string tag = " f" + std::to_string(j) + " t=" + fmt(b.front().times.front());
    rep.checks.push_back(make_check("var Z vs QV without" + tag, va, qa,
                                    Tolerance{std::nullopt, qv_relative_cap, std::nullopt, Side::TwoSided}));
    rep.checks.push_back(make_check("var Z vs QV with" + tag, vb, qb,
                                    Tolerance{std::nullopt, qv_relative_cap, std::nullopt, Side::TwoSided}));
    rep.checks.push_back(make_check("variance change vs predicted" + tag, dv, dq,
                                    Tolerance{std::nullopt, qv_relative_cap, std::nullopt, Side::TwoSided}));
  }
  return rep;
}

VerificationReport verify_dual_skeleton(std::size_t skeletons, int max_level, double horizon,
                                        const StreamSource& source) {
  if (max_level < 2) throw Error(ErrorCode::LevelTooLow, "skeleton check needs max_level >= 2");
  VerificationReport rep;
  rep.suite = "dual-skeleton";

  // First operator at level 2: Coalesce(1,2), Coalesce(2,1), Drift(1), Drift(2).
  std::vector<int> first(skeletons, -1);
  const StreamSource l2 = source.child("level2");
  parallel_for(skeletons, [&](std::size_t r) {
    auto rng = l2.stream(r);
    const JumpSkeleton sk = sample_skeleton(2, horizon, rng);
    if (sk.jumps() == 0) return;
    const DualOperator& op = sk.ops.front();
    first[r] = op.kind == DualOperatorKind::Coalesce ? op.p - 1 : 2 + op.p - 1;
  });
  std::array<double, 4> counts{};
  double total = 0.0;
  for (int c : first)
    if (c >= 0) {
      counts[static_cast<std::size_t>(c)] += 1.0;
      total += 1.0;
    }
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - total / 4) * (c - total / 4) / (total / 4);
  constexpr double df = 3.0;
  const double critical = boost::math::quantile(boost::math::chi_squared(df), 0.99);
  MomentEstimate stat{chi2, 0.0, Provenance::Dual, static_cast<std::size_t>(total)};
  MomentEstimate expected{df, std::sqrt(2 * df), Provenance::Dual, 0};
  // z <= (critical - df) / sqrt(2 df) is the same as chi2 <= critical.
  rep.checks.push_back(make_check("level-2 operator chi-square", stat, expected,
                                  Tolerance{(critical - df) / std::sqrt(2 * df), std::nullopt, std::nullopt,
                                            Side::Upper}));

  // Jumps out of level N per unit time spent at level N.
  struct Exposure {
    std::vector<double> time;
    std::vector<double> jumps;
  };
  std::vector<Exposure> per(skeletons);
  const StreamSource rs = source.child("rates");
  parallel_for(skeletons, [&](std::size_t r) {
    auto rng = rs.stream(r);
    const JumpSkeleton sk = sample_skeleton(max_level, horizon, rng);
    Exposure e{std::vector<double>(static_cast<std::size_t>(max_level) + 1, 0.0),
               std::vector<double>(static_cast<std::size_t>(max_level) + 1, 0.0)};
    double prev = 0.0;
    for (int j = 0; j < sk.jumps(); ++j) {
      const auto lvl = static_cast<std::size_t>(sk.levels[static_cast<std::size_t>(j)]);
      e.time[lvl] += sk.times[static_cast<std::size_t>(j)] - prev;
      e.jumps[lvl] += 1.0;
      prev = sk.times[static_cast<std::size_t>(j)];
    }
    e.time[static_cast<std::size_t>(sk.final_level())] += horizon - prev;
    per[r] = std::move(e);
  });
  for (int level = 1; level <= max_level; ++level) {
    double time = 0.0, jumps = 0.0;
    for (const auto& e : per) {
      time += e.time[static_cast<std::size_t>(level)];
      jumps += e.jumps[static_cast<std::size_t>(level)];
    }
    if (time <= 0.0) continue;
    MomentEstimate rate{jumps / time, std::sqrt(jumps) / time, Provenance::Dual, skeletons};
    MomentEstimate expected_rate{0.5 * level * level, 0.0, Provenance::Dual, 0};
    rep.checks.push_back(make_check("jump rate level " + std::to_string(level), rate, expected_rate));
  }
  return rep;
}

VerificationReport verify_offspring_laws(std::size_t draws, const StreamSource& source) {
  auto rng = source.stream(0);
  double worst_mean = 0.0, worst_var = 0.0;
  double feasible = 0.0, unexpected = 0.0;
  for (std::size_t i = 0; i < draws; ++i) {
    const double mean = 0.5 + rng.uniform();
    const double var = 4.0 * rng.uniform();
    const bool possible = var >= lattice_min_variance(mean);
    try {
      const OffspringLaw law = offspring_law(mean, var);
      if (!possible) {
        unexpected += 1.0;
        continue;
      }
      feasible += 1.0;
      worst_mean = std::max(worst_mean, std::abs(law.mean() - mean));
      worst_var = std::max(worst_var, std::abs(law.variance() - var));
    } catch (const Error& e) {
      if (possible || e.code() != ErrorCode::InfeasibleLaw) unexpected += 1.0;
    }
  }
  VerificationReport rep;
  rep.suite = "offspring-law";
  const Tolerance exact{std::nullopt, std::nullopt, 1e-12, Side::TwoSided};
  const MomentEstimate zero{};
  const auto n = static_cast<std::size_t>(feasible);
  rep.checks.push_back(make_check("max mean error", MomentEstimate{worst_mean, 0.0, Provenance::FormulaClosed, n},
                                  zero, exact));
  rep.checks.push_back(make_check("max variance error", MomentEstimate{worst_var, 0.0, Provenance::FormulaClosed, n},
                                  zero, exact));
  rep.checks.push_back(make_check("wrong feasibility verdicts",
                                  MomentEstimate{unexpected, 0.0, Provenance::FormulaClosed, draws}, zero,
                                  Tolerance{std::nullopt, std::nullopt, 0.0, Side::TwoSided}));
  return rep;
}

WeakOrderStudy weak_order_study(const ValidatedModel& model, const Eigen::VectorXd& y0, const TestFunction& f,
                                double horizon, const std::vector<double>& dts, std::size_t paths,
                                const StreamSource& source) {
  if (!model.is_affine()) throw Error(ErrorCode::NotAffine, "weak-order study needs an affine model");
  const int d = model.d();
  if (y0.size() != d) throw Error(ErrorCode::DimensionMismatch, "start point has wrong dimension");
  const auto& spec = model.spec();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd v;
  if (spec.b.kind() == FieldKind::Affine) {
    a = spec.b.affine_matrix();
    v = spec.b.affine_offset();
  } else {
    v = spec.b.constant_value().col(0);
  }
  const Eigen::MatrixXd& e = spec.e.constant_value();
  const Eigen::MatrixXd& c = spec.c.constant_value();
  const Eigen::MatrixXd diff = e * e.transpose() + c * c.transpose();
  // Symmetric root, the same factor the exact transition uses.
  const Eigen::MatrixXd root = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(diff).operatorSqrt();

  WeakOrderStudy study;
  study.dts = dts;
  for (std::size_t i = 0; i < dts.size(); ++i) {
    const double dt = dts[i];
    const int steps = static_cast<int>(std::llround(horizon / dt));
    if (steps < 1) throw Error(ErrorCode::ValidationError, "dt larger than the horizon");
    const double h = horizon / steps;
    const GaussianTransition exact(model, h);
    const StreamSource src = source.child("dt" + std::to_string(i));
    std::vector<double> diffs(paths);
    parallel_for(paths, [&](std::size_t r) {
      auto rng = src.stream(r);
      Eigen::VectorXd x = y0;
      DiffusionState ex{y0, 0.0};
      std::vector<double> xi(static_cast<std::size_t>(d));
      Eigen::VectorXd z(d);
      for (int k = 0; k < steps; ++k) {
        for (int j = 0; j < d; ++j) z(j) = xi[static_cast<std::size_t>(j)] = rng.normal();
        x += (a * x + v) * h + std::sqrt(h) * (root * z);
        ex = exact.apply(ex, xi);
      }
      diffs[r] = f.value(x) - f.value(ex.points);
    });
    study.errors.push_back(sample_estimate(diffs, Provenance::FormulaMc));
  }
  // Least squares slope of log|error| on log dt.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double m = static_cast<double>(dts.size());
  for (std::size_t i = 0; i < dts.size(); ++i) {
    const double lx = std::log(dts[i]);
    const double ly = std::log(std::abs(study.errors[i].value));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  study.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  return study;
}

VerificationReport verify_weak_order(const WeakOrderStudy& study, double min_slope) {
  VerificationReport rep;
  rep.suite = "sde-weak-order";
  const MomentEstimate slope{study.slope, 0.0, Provenance::FormulaMc, study.dts.size()};
  rep.checks.push_back(make_check("weak-order slope", slope, MomentEstimate{1.0, 0.0, Provenance::FormulaClosed, 0},
                                  Tolerance{std::nullopt, std::nullopt, 1.0 - min_slope, Side::Lower}));
  return rep;
}

MollificationReport mollification_experiment(const Scenario& raw, const std::vector<double>& widths,
                                             const TestFunction& h, double t) {
  const double ts = snapped_time(raw, t);
  // Every run draws from the same streams so replicate r is paired across widths.
  const auto base = particle_runs(raw, {h}, {ts}, "mollification");
  auto values = [](const std::vector<TimeSeries>& runs) {
    std::vector<double> out;
    out.reserve(runs.size());
    for (const auto& r : runs) out.push_back(r.values.front().front());
    return out;
  };
  const auto raw_values = values(base);
  MollificationReport rep;
  rep.widths = widths;
  rep.raw = sample_estimate(raw_values, Provenance::Particle);
  for (double w : widths) {
    ModelSpec spec = raw.model.spec();
    spec.gamma = mollify(spec.gamma, w);
    spec.sigma = mollify(spec.sigma, w);
    Scenario sc = raw;
    sc.model = validate_model(std::move(spec));
    const auto smooth = values(particle_runs(sc, {h}, {ts}, "mollification"));
    std::vector<double> diff(smooth.size());
    for (std::size_t r = 0; r < diff.size(); ++r) diff[r] = smooth[r] - raw_values[r];
    rep.differences.push_back(sample_estimate(diff, Provenance::Particle));
  }
  return rep;
}

VerificationReport verify_mollification_trend(const MollificationReport& report) {
  VerificationReport rep;
  rep.suite = "mollification";
  const Tolerance trend{2.0, std::nullopt, std::nullopt, Side::Upper};
  for (std::size_t i = 0; i + 1 < report.differences.size(); ++i) {
    MomentEstimate next = report.differences[i + 1];
    MomentEstimate prev = report.differences[i];
    next.value = std::abs(next.value);
    prev.value = std::abs(prev.value);
    rep.checks.push_back(make_check(
        "|d(" + fmt(report.widths[i + 1]) + ")| <= |d(" + fmt(report.widths[i]) + ")|", next, prev, trend));
  }
  return rep;
}

MomentEstimate extrapolate_in_n(const std::vector<int>& ns, const std::function<MomentEstimate(int)>& estimate_at) {
  if (ns.size() < 2) throw Error(ErrorCode::ValidationError, "extrapolation needs at least two n");
  const auto k = static_cast<Eigen::Index>(ns.size());
  Eigen::MatrixXd x(k, 2);
  Eigen::VectorXd y(k), w(k);
  std::vector<MomentEstimate> est;
  bool weighted = true;
  for (Eigen::Index i = 0; i < k; ++i) {
    est.push_back(estimate_at(ns[static_cast<std::size_t>(i)]));
    x(i, 0) = 1.0;
    x(i, 1) = 1.0 / ns[static_cast<std::size_t>(i)];
    y(i) = est.back().value;
    weighted = weighted && est.back().std_error > 0.0;
  }
  for (Eigen::Index i = 0; i < k; ++i)
    w(i) = weighted ? 1.0 / (est[static_cast<std::size_t>(i)].std_error * est[static_cast<std::size_t>(i)].std_error)
                    : 1.0;
  const Eigen::MatrixXd xtw = x.transpose() * w.asDiagonal();
  const Eigen::MatrixXd cov = (xtw * x).inverse();
  const Eigen::VectorXd beta = cov * (xtw * y);
  MomentEstimate out;
  out.value = beta(0);
  out.provenance = est.front().provenance;
  for (const auto& e : est) out.replicates += e.replicates;
  out.std_error = weighted ? std::sqrt(cov(0, 0)) : 0.0;
  return out;
}

}  // namespace flowsuper
