#include <doctest.h>

#include <algorithm>
#include <set>

#include "../support/fixtures.hpp"
#include "flowsuper/errors.hpp"
#include "flowsuper/parallel.hpp"
#include "flowsuper/particles.hpp"

using namespace flowsuper;
using namespace fixtures;

namespace {

ScaleSpec at_origin(int n, int k) {
  ScaleSpec s;
  s.n = n;
  s.initial_count = k;
  s.placement.kind = PlacementKind::Point;
  s.placement.at = vec(0.0);
  return s;
}

}  // namespace

TEST_CASE("init_population examples") {
  RandomStream rng(1);
  CHECK(init_population(at_origin(10, 10), 1, rng).total_mass() == doctest::Approx(1.0));
  CHECK(init_population(at_origin(100, 250), 1, rng).total_mass() == doctest::Approx(2.5));
  ScaleSpec g = at_origin(10, 3);
  g.placement.kind = PlacementKind::Grid;
  g.placement.lo = -1.0;
  g.placement.hi = 1.0;
  const auto pop = init_population(g, 1, rng);
  CHECK(pop.positions(0, 0) == -1.0);
  CHECK(pop.positions(0, 1) == 0.0);
  CHECK(pop.positions(0, 2) == 1.0);
  CHECK(pop.generation == 0);
  try {
    init_population(at_origin(10, 0), 1, rng);
    FAIL("expected EmptyInitial");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyInitial);
  }
}

TEST_CASE("null branching preserves the count and moves particles") {
  const auto model = brownian_model(1.0, 0.3, 0.0, 0.0);
  RandomStream rng(2);
  auto pop = init_population(at_origin(20, 20), 1, rng);
  for (int g = 0; g < 40; ++g) {
    const auto next = step_generation(pop, model, 0.01, rng);
    CHECK(next.count() == pop.count());
    CHECK(next.generation == pop.generation + 1);
    pop = next;
  }
  CHECK(pop.total_mass() == 1.0);
  CHECK(pop.positions.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("location-dependent law is evaluated at the death position") {
  auto s = scalar_spec(0.0, 0.0);
  s.e = CoefficientField::constant(mat(0.0));
  // gamma = sigma = 0 on x < 0, large on x > 0
  s.gamma = CoefficientField::step(1, 1, {entry(Profile::Indicator, 1.0, 1.0, 0.0, 0.0)});
  s.sigma = CoefficientField::step(1, 1, {entry(Profile::Indicator, 1.0, 1.0, 0.0, 0.0)});
  s.gamma_bound = 1.0;
  s.sigma_bound = 1.0;
  const auto model = validate_model(s);
  ScaleSpec sc = at_origin(50, 30);
  sc.placement.at = vec(-1.0);
  RandomStream rng(3);
  const auto pop = init_population(sc, 1, rng);
  const auto next = step_generation(pop, model, 0.01, rng);
  CHECK(next.count() == pop.count());
  CHECK(next.positions == pop.positions);
  CHECK(next.generation == 1);
}

TEST_CASE("one generation has offspring mean 1 + gamma/n") {
  const auto model = brownian_model(1.0, 0.0, 0.5, 1.0);
  const int reps = 10000;
  double sum = 0.0, sum2 = 0.0;
  for (int r = 0; r < reps; ++r) {
    RandomStream rng(1000 + r);
    const auto pop = init_population(at_origin(100, 100), 1, rng);
    const double c = step_generation(pop, model, 0.01, rng).count();
    sum += c;
    sum2 += c * c;
  }
  const double mean = sum / reps;
  const double se = std::sqrt((sum2 / reps - mean * mean) / reps);
  CHECK(std::abs(mean - 100.0 * 1.005) <= 3.0 * se);
}

TEST_CASE("labels extend the parent path and stay unique") {
  const auto model = brownian_model(1.0, 0.0, 0.5, 1.0);
  RandomStream rng(4);
  auto pop = init_population(at_origin(10, 8), 1, rng, true);
  for (int g = 0; g < 6; ++g) {
    pop = step_generation(pop, model, 0.05, rng);
    std::set<std::pair<int, std::vector<std::uint32_t>>> seen;
    for (int i = 0; i < pop.count(); ++i) {
      const auto l = pop.label(i);
      CHECK(static_cast<int>(l.path.size()) == pop.generation);
      CHECK(l.ancestor >= 1);
      CHECK(l.ancestor <= 8);
      CHECK(seen.insert({l.ancestor, l.path}).second);
    }
  }
}

TEST_CASE("population cap") {
  const auto model = brownian_model(1.0, 0.0, 0.5, 1.0);
  RandomStream rng(5);
  const auto pop = init_population(at_origin(1, 100), 1, rng);
  StepOptions opts;
  opts.population_cap = 10;
  try {
    step_generation(pop, model, 0.5, rng, opts);
    FAIL("expected PopulationExplosion");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PopulationExplosion);
  }
}

TEST_CASE("run_simulation snapshots") {
  const auto model = brownian_model(1.0, 0.5, 0.5, 1.0);
  RandomStream rng(6);
  RunSpec run;
  run.horizon = 0.005;
  run.dt_max = 0.001;
  run.snap_times = {0.0, 0.005};
  run.observables = {TestFunction::one(1), cos1(1.0)};
  const auto early = run_simulation(model, at_origin(100, 50), run, rng);
  CHECK(early.times[1] == 0.0);
  CHECK(early.mass[1] == 0.5);
  CHECK(early.values[1][1] == doctest::Approx(0.5));

  run.horizon = 1.0;
  run.snap_times = {0.0, 0.337, 1.0};
  const auto ts = run_simulation(model, at_origin(100, 100), run, rng);
  CHECK(ts.times[1] == doctest::Approx(0.33));
  for (std::size_t s = 0; s < 3; ++s) CHECK(ts.values[s][0] == doctest::Approx(ts.mass[s]).epsilon(1e-12));
}

TEST_CASE("null branching conserves mass pathwise") {
  const auto model = ou_model(1.0, 1.0, 0.5, 0.0, 0.0);
  RunSpec run;
  run.horizon = 2.0;
  run.dt_max = 0.01;
  run.snap_times = {0.5, 1.0, 1.5, 2.0};
  const auto runs = simulate_replicates(model, at_origin(50, 37), run, 8, source(7, "conserve"));
  for (const auto& ts : runs)
    for (double m : ts.mass) CHECK(m == 37.0 / 50.0);
}

TEST_CASE("product_moment_estimate examples") {
  TimeSeries a, b;
  for (auto* ts : {&a, &b}) {
    ts->times = {0.0, 1.0};
    ts->mass = {1.0, 1.0};
    ts->values = {{1.0}, {1.0}};
  }
  auto est = product_moment_estimate({a, b}, 1.0, {kTotalMass});
  CHECK(est.value == 1.0);
  CHECK(est.std_error == 0.0);
  a.mass[1] = b.mass[1] = 1.7;
  est = product_moment_estimate({a, b}, 1.0, {kTotalMass, kTotalMass});
  CHECK(est.value == doctest::Approx(1.7 * 1.7));
  CHECK(est.std_error == 0.0);
  CHECK(est.provenance == Provenance::Particle);
  try {
    product_moment_estimate({a}, 1.0, {0});
    FAIL("expected InsufficientReplicates");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientReplicates);
  }
}

TEST_CASE("replicates are reproducible and independent of thread count") {
  const auto model = ou_model(1.0, 1.0, 0.5, 0.3, 1.0);
  RunSpec run;
  run.horizon = 0.5;
  run.dt_max = 0.02;
  run.snap_times = {0.25, 0.5};
  run.observables = {cos1(1.0)};
  const auto src = source(8, "repro");
  const auto before = thread_count();
  set_thread_count(1);
  const auto one = simulate_replicates(model, at_origin(50, 50), run, 6, src);
  set_thread_count(4);
  const auto four = simulate_replicates(model, at_origin(50, 50), run, 6, src);
  set_thread_count(before);
  for (std::size_t r = 0; r < 6; ++r) {
    CHECK(one[r].mass == four[r].mass);
    CHECK(one[r].values == four[r].values);
  }
}

TEST_CASE("exchangeability of the initial labels") {
  const auto model = ou_model(1.0, 1.0, 0.5, 0.3, 1.0);
  ScaleSpec sc = at_origin(50, 40);
  sc.placement.kind = PlacementKind::Explicit;
  for (int i = 0; i < 40; ++i) sc.placement.points.push_back(vec(-1.0 + 0.05 * i));
  ScaleSpec shuffled = sc;
  std::reverse(shuffled.placement.points.begin(), shuffled.placement.points.end());
  RunSpec run;
  run.horizon = 1.0;
  run.dt_max = 0.02;
  run.snap_times = {1.0};
  run.observables = {cos1(1.0, 0.4)};
  const auto src = source(9, "exchange");
  const auto a = simulate_replicates(model, sc, run, 600, src);
  const auto b = simulate_replicates(model, shuffled, run, 600, src.child("shuffled"));
  for (int obs : {kTotalMass, 0}) {
    const auto ea = product_moment_estimate(a, 1.0, {obs});
    const auto eb = product_moment_estimate(b, 1.0, {obs});
    CHECK(std::abs(zscore(ea.value, ea.std_error, eb.value, eb.std_error)) < 3.0);
  }
}

TEST_CASE("sup of squared mass has no trend in n") {
  const auto model = brownian_model(1.0, 0.0, 0.5, 1.0);
  std::vector<MomentEstimate> est;
  for (int n : {50, 100, 200}) {
    RunSpec run;
    run.horizon = 1.0;
    run.dt_max = 0.05;
    for (int k = 0; k <= n; ++k) run.snap_times.push_back(static_cast<double>(k) / n);
    const auto runs = simulate_replicates(model, at_origin(n, n), run, 300, source(10, "trend").child(std::to_string(n)));
    std::vector<double> sups;
    for (const auto& ts : runs) {
      double m = 0.0;
      for (double x : ts.mass) m = std::max(m, x * x);
      sups.push_back(m);
    }
    est.push_back(sample_estimate(sups, Provenance::Particle));
    CHECK(std::isfinite(est.back().value));
  }
  CHECK(std::abs(zscore(est[0].value, est[0].std_error, est[2].value, est[2].std_error)) < 3.0);
  CHECK(std::abs(zscore(est[0].value, est[0].std_error, est[1].value, est[1].std_error)) < 3.0);
}

TEST_CASE("martingale trace with f = 1 and gamma = 0 is the mass increment") {
  const auto model = ou_model(1.0, 1.0, 0.5, 0.0, 1.0);
  RandomStream rng(11);
  const auto trace = martingale_run(model, at_origin(50, 50), 0.01, {TestFunction::one(1)}, {0.5, 1.0}, rng);
  RandomStream again(11);
  RunSpec run;
  run.horizon = 1.0;
  run.dt_max = 0.01;
  run.snap_times = {0.5, 1.0};
  const auto ts = run_simulation(model, at_origin(50, 50), run, again);
  CHECK(trace.z(0, 0) == doctest::Approx(ts.mass[0] - 1.0).epsilon(1e-12));
  CHECK(trace.z(1, 0) == doctest::Approx(ts.mass[1] - 1.0).epsilon(1e-12));
  // c has no effect on Lambda for constant f; qv is int sigma^2 X(1)
  CHECK(trace.qv(1, 0) > 0.0);
}

TEST_CASE("quadratic variation density without common noise is sigma^2 X(f^2)") {
  const auto model = ou_model(1.0, 1.0, 0.0, 0.0, 0.7);
  auto spec = model.spec();
  spec.sigma = CoefficientField::scalar(0.7);
  RandomStream rng(12);
  ScaleSpec sc = at_origin(10, 10);
  sc.placement.at = vec(0.4);
  // Only one generation so X_s is the same 10 points throughout; with zero motion the
  // QV integral is exactly t * sigma^2 * X(f^2).
  spec.e = CoefficientField::constant(mat(0.0));
  spec.b = CoefficientField::constant(mat(0.0));
  const auto still = validate_model(spec);
  const auto f = cos1(1.3, 0.2);
  const auto trace = martingale_run(still, sc, 0.01, {f}, {0.1}, rng);
  const double fx = std::cos(1.3 * 0.4 + 0.2);
  CHECK(trace.qv(0, 0) == doctest::Approx(0.1 * 0.49 * fx * fx));
}
