#include <doctest.h>

#include <cmath>

#include "../support/fixtures.hpp"
#include "flowsuper/errors.hpp"
#include "flowsuper/harness.hpp"
#include "flowsuper/moments.hpp"
#include "flowsuper/parallel.hpp"

using namespace flowsuper;
using namespace fixtures;

namespace {

MomentEstimate est(double v, double se) { return MomentEstimate{v, se, Provenance::Particle, 10}; }

Scenario small_scenario(ValidatedModel model, int n, int k, double x0, std::size_t replicates,
                        std::size_t dual_paths) {
  Scenario sc{std::move(model), {}};
  sc.scale.n = n;
  sc.scale.initial_count = k;
  sc.scale.placement.kind = PlacementKind::Point;
  sc.scale.placement.at = vec(x0);
  sc.replicates = replicates;
  sc.dual_paths = dual_paths;
  sc.seed = 99;
  return sc;
}

}  // namespace

TEST_CASE("make_check applies the z rule with the standard-error floor") {
  auto c = make_check("a", est(1.06, 0.03), est(1.0, 0.04));
  CHECK(c.z == doctest::Approx(0.06 / 0.05));
  CHECK(c.pass);
  c = make_check("b", est(1.2, 0.03), est(1.0, 0.04));
  CHECK(c.z == doctest::Approx(4.0));
  CHECK_FALSE(c.pass);
  // Zero variance on both sides: equal values pass, unequal fail.
  c = make_check("c", est(2.0, 0.0), est(2.0, 0.0));
  CHECK(c.z == 0.0);
  CHECK(c.pass);
  c = make_check("d", est(2.0 + 1e-9, 0.0), est(2.0, 0.0));
  CHECK(c.z == doctest::Approx(1000.0).epsilon(1e-6));
  CHECK_FALSE(c.pass);
}

TEST_CASE("relative and absolute caps and one-sided tolerances") {
  const Tolerance rel{std::nullopt, 0.15, std::nullopt, Side::TwoSided};
  CHECK(make_check("r1", est(1.1, 0.0), est(1.0, 0.0), rel).pass);
  CHECK_FALSE(make_check("r2", est(1.2, 0.0), est(1.0, 0.0), rel).pass);
  CHECK(make_check("r3", est(1.1, 0.0), est(1.0, 0.0), rel).relative_error == doctest::Approx(0.1));
  // Both z and relative: either failing fails the check.
  const Tolerance both{3.0, 0.15, std::nullopt, Side::TwoSided};
  CHECK_FALSE(make_check("r4", est(1.2, 0.1), est(1.0, 0.0), both).pass);
  CHECK_FALSE(make_check("r5", est(1.1, 0.01), est(1.0, 0.0), both).pass);
  CHECK(make_check("r6", est(1.1, 0.05), est(1.0, 0.0), both).pass);

  const Tolerance upper{2.0, std::nullopt, std::nullopt, Side::Upper};
  CHECK(make_check("u1", est(-5.0, 1.0), est(0.0, 0.0), upper).pass);
  CHECK_FALSE(make_check("u2", est(2.5, 1.0), est(0.0, 0.0), upper).pass);
  const Tolerance lower{std::nullopt, std::nullopt, 0.2, Side::Lower};
  CHECK(make_check("l1", est(1.9, 0.0), est(1.0, 0.0), lower).pass);
  CHECK(make_check("l2", est(0.8, 0.0), est(1.0, 0.0), lower).pass);
  CHECK_FALSE(make_check("l3", est(0.79, 0.0), est(1.0, 0.0), lower).pass);
  // Zero reference with a relative cap only passes on exact agreement.
  CHECK(make_check("z0", est(0.0, 0.0), est(0.0, 0.0), rel).pass);
  CHECK_FALSE(make_check("z1", est(1e-3, 0.0), est(0.0, 0.0), rel).pass);
  // Non-finite estimates never pass.
  CHECK_FALSE(make_check("nan", est(std::nan(""), 0.1), est(0.0, 0.0)).pass);
}

TEST_CASE("report passes only when every check passes") {
  VerificationReport rep;
  rep.suite = "s";
  CHECK(rep.passed());
  rep.checks.push_back(make_check("ok", est(1.0, 0.1), est(1.0, 0.1)));
  CHECK(rep.passed());
  rep.checks.push_back(make_check("bad", est(2.0, 0.1), est(1.0, 0.1)));
  CHECK_FALSE(rep.passed());
}

TEST_CASE("snapped times and initial measures") {
  Scenario sc = small_scenario(brownian_model(1.0, 0.0, 0.0, 1.0), 10, 4, 0.5, 10, 10);
  CHECK(snapped_time(sc, 0.57) == doctest::Approx(0.5));
  CHECK(snapped_time(sc, 0.3) == doctest::Approx(0.3));
  CHECK_THROWS_AS(snapped_time(sc, -0.1), Error);
  auto nu = initial_measure(sc);
  CHECK(nu.count() == 4);
  CHECK(nu.weight == doctest::Approx(0.1));
  CHECK(nu.atoms(0, 3) == 0.5);

  sc.scale.placement.kind = PlacementKind::Gaussian;
  sc.scale.placement.mean = vec(0.0);
  sc.scale.placement.sd = 1.0;
  const auto g1 = initial_measure(sc);
  const auto g2 = initial_measure(sc);
  CHECK(g1.atoms == g2.atoms);
  CHECK(g1.atoms(0, 0) != g1.atoms(0, 1));
}

TEST_CASE("first moment: degenerate and t = 0 cases agree exactly") {
  // gamma = 0, sigma = 0: one child per death, so the particle mass is 1 on every path.
  Scenario sc = small_scenario(brownian_model(1.0, 0.0, 0.0, 0.0), 10, 10, 0.0, 50, 2000);
  auto rep = verify_first_moment(sc, TestFunction::one(1), 1.0);
  REQUIRE(rep.checks.size() == 3);
  CHECK(rep.checks[0].estimate.value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep.checks[0].estimate.std_error == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(rep.checks[0].reference.value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep.passed());

  Scenario s0 = small_scenario(ou_model(1.0, 1.0, 0.5, 0.5, 1.0), 10, 10, 0.3, 20, 100);
  const auto h = cos1(1.0, 0.2);
  rep = verify_first_moment(s0, h, 0.0);
  const double nu_h = std::cos(0.3 + 0.2);
  for (const auto& c : rep.checks) {
    CHECK(c.estimate.value == doctest::Approx(nu_h).epsilon(1e-12));
    CHECK(c.reference.value == doctest::Approx(nu_h).epsilon(1e-12));
    CHECK(c.pass);
  }
}

TEST_CASE("first moment three-way check at small scale") {
  Scenario sc = small_scenario(ou_model(1.0, 1.0, 0.5, 0.4, 1.0), 50, 50, 0.2, 800, 20000);
  sc.scheme = MotionScheme::Exact;
  const auto rep = verify_first_moment(sc, cos1(1.0, 0.1), 0.5);
  for (const auto& c : rep.checks) CHECK_MESSAGE(c.pass, c.name << " z=" << c.z);
  CHECK(rep.checks[0].reference.value ==
        doctest::Approx(std::exp(0.2) * std::exp(-0.5 * 1.25 * (1 - std::exp(-1.0)) / 2.0) *
                        std::cos(0.2 * std::exp(-0.5) + 0.1)));
}

TEST_CASE("second moment suite: analytic routes agree, sigma = 0 factorises") {
  Scenario sc = small_scenario(ou_model(1.0, 1.0, 0.5, 0.3, 0.0), 50, 50, 0.1, 200, 2000);
  sc.scheme = MotionScheme::Exact;
  const auto h = cos1(1.0);
  const auto rep = verify_second_moment(sc, h, h, 0.5, 0.5);
  REQUIRE(rep.checks.size() == 4);
  CHECK(rep.checks[0].name.rfind("recursion vs corollary", 0) == 0);
  CHECK(rep.checks[0].pass);
  const double first = closed_form_first_moment(h, initial_measure(sc), 0.5, sc.model).value;
  // Common noise keeps the particles correlated, so the second moment is the
  // closed form of E[X(h)^2], not first^2; with c = 0 it factorises.
  Scenario iid = small_scenario(ou_model(1.0, 1.0, 0.0, 0.3, 0.0), 50, 50, 0.1, 200, 2000);
  const auto nu = initial_measure(iid);
  const double first_iid = closed_form_first_moment(h, nu, 0.5, iid.model).value;
  const auto cf = closed_form_second_moment(h, h, 0.5, 0.5, nu, iid.model);
  CHECK(cf.estimate.value == doctest::Approx(first_iid * first_iid).epsilon(1e-9));
  CHECK(std::isfinite(first));
}

TEST_CASE("second moment suite passes at small scale, equal and mixed times") {
  Scenario sc = small_scenario(ou_model(1.0, 1.0, 0.5, 0.3, 1.0), 50, 50, 0.0, 1500, 20000);
  sc.scheme = MotionScheme::Exact;
  sc.formula_paths = 4000;
  const auto h = cos1(1.0);
  auto rep = verify_second_moment(sc, h, h, 0.6, 0.6);
  CHECK(rep.checks.size() == 5);
  for (const auto& c : rep.checks) CHECK_MESSAGE(c.pass, c.name << " z=" << c.z << " rel=" << c.relative_error);
  rep = verify_second_moment(sc, h, cos1(1.0, 0.4), 0.3, 0.6);
  CHECK(rep.checks.size() == 3);
  for (const auto& c : rep.checks) CHECK_MESSAGE(c.pass, c.name << " z=" << c.z);
  CHECK_THROWS_AS(verify_second_moment(sc, h, h, 0.6, 0.3), Error);
}

TEST_CASE("Laplace suite: rho = 0 trivially, monotone in rho") {
  Scenario sc = small_scenario(brownian_model(1.0, 0.0, 0.5, 1.0), 50, 50, 0.0, 600, 10);
  const auto rep = verify_laplace(sc, {0.0, 0.5, 1.0, 2.0}, 1.0);
  REQUIRE(rep.checks.size() == 4);
  CHECK(rep.checks[0].estimate.value == 1.0);
  CHECK(rep.checks[0].reference.value == 1.0);
  for (std::size_t i = 0; i + 1 < rep.checks.size(); ++i) {
    CHECK(rep.checks[i + 1].estimate.value < rep.checks[i].estimate.value);
    CHECK(rep.checks[i + 1].reference.value < rep.checks[i].reference.value);
  }
  for (const auto& c : rep.checks) CHECK_MESSAGE(c.pass, c.name << " z=" << c.z);

  ModelSpec spec = scalar_spec(0.5, 1.0);
  spec.gamma = CoefficientField::bounded_smooth(1, 1, {entry(Profile::Sine, 0.2, 1.0, 0.0, 0.0)});
  spec.gamma.declared_lipschitz = 0.2;
  spec.gamma_bound = 0.2;
  Scenario bad = small_scenario(validate_model(spec), 10, 10, 0.0, 10, 10);
  CHECK_THROWS_AS(verify_laplace(bad, {1.0}, 1.0), Error);
}

TEST_CASE("martingale suite with f = 1 and gamma = 0") {
  Scenario sc = small_scenario(brownian_model(1.0, 0.0, 0.0, 1.0), 50, 50, 0.0, 1000, 10);
  const auto rep = verify_martingale(sc, {TestFunction::one(1)}, {0.5, 1.0});
  REQUIRE(rep.checks.size() == 4);
  for (const auto& c : rep.checks) CHECK_MESSAGE(c.pass, c.name << " z=" << c.z << " rel=" << c.relative_error);
  // QV of the mass is sigma^2 int X_s(1) ds = t for unit mean mass.
  CHECK(rep.checks[3].reference.value == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("dual skeleton suite passes") {
  const auto rep = verify_dual_skeleton(20000, 3, 4.0, source(5, "skeleton"));
  REQUIRE(rep.checks.size() == 4);
  CHECK(rep.checks[0].tolerance.side == Side::Upper);
  for (const auto& c : rep.checks) CHECK_MESSAGE(c.pass, c.name << " z=" << c.z);
  CHECK_THROWS_AS(verify_dual_skeleton(10, 1, 1.0, source(5, "skeleton")), Error);
}

TEST_CASE("offspring sweep suite passes") {
  const auto rep = verify_offspring_laws(1000, source(6, "offspring"));
  REQUIRE(rep.checks.size() == 3);
  CHECK(rep.passed());
  CHECK(rep.checks[0].estimate.replicates > 100);
}

TEST_CASE("weak-order study on OU gives slope near one") {
  const auto model = ou_model(1.0, 1.0, 0.0, 0.0, 0.0);
  const auto study =
      weak_order_study(model, vec(1.0), cos1(1.0), 1.0, {0.1, 0.05, 0.025}, 20000, source(7, "weak"));
  REQUIRE(study.errors.size() == 3);
  CHECK(std::abs(study.errors[0].value) > std::abs(study.errors[2].value));
  CHECK(study.slope > 0.8);
  CHECK(verify_weak_order(study).passed());

  ModelSpec spec = scalar_spec(0.0, 0.0);
  spec.b = CoefficientField::bounded_smooth(1, 1, {entry(Profile::Sine, 1.0, 1.0, 0.0, 0.0)});
  spec.b.declared_lipschitz = 1.0;
  CHECK_THROWS_AS(weak_order_study(validate_model(spec), vec(0.0), cos1(1.0), 1.0, {0.1}, 10, source(1, "w")),
                  Error);
}

TEST_CASE("mollification of constant coefficients changes nothing") {
  Scenario sc = small_scenario(brownian_model(1.0, 0.0, 0.3, 1.0), 20, 20, 0.0, 50, 10);
  const auto rep = mollification_experiment(sc, {0.4, 0.2}, TestFunction::one(1), 0.5);
  REQUIRE(rep.differences.size() == 2);
  for (const auto& d : rep.differences) {
    CHECK(d.value == 0.0);
    CHECK(d.std_error == 0.0);
  }
  CHECK(verify_mollification_trend(rep).passed());
}

TEST_CASE("mollification of a step rate gives paired differences") {
  ModelSpec spec = scalar_spec(0.0, 1.0);
  spec.gamma = CoefficientField::step(1, 1, {entry(Profile::Indicator, 1.0, 1.0, 0.0, 0.0)});
  spec.gamma_bound = 1.0;
  Scenario sc = small_scenario(validate_model(spec), 20, 20, 0.3, 100, 10);
  const auto rep = mollification_experiment(sc, {0.4, 0.1}, TestFunction::one(1), 0.5);
  REQUIRE(rep.differences.size() == 2);
  CHECK(rep.differences[0].value != 0.0);
  CHECK(rep.differences[1].replicates == 100);
  CHECK(std::isfinite(rep.raw.value));
}

TEST_CASE("trend check logic") {
  MollificationReport rep;
  rep.widths = {0.4, 0.2, 0.1};
  rep.differences = {est(-0.10, 0.01), est(0.05, 0.01), est(0.07, 0.01)};
  auto v = verify_mollification_trend(rep);
  REQUIRE(v.checks.size() == 2);
  CHECK(v.checks[0].pass);
  CHECK(v.checks[1].pass);  // 0.07 <= 0.05 + 2 * 0.0141
  rep.differences[2] = est(0.09, 0.01);
  CHECK_FALSE(verify_mollification_trend(rep).passed());
}

TEST_CASE("extrapolation in 1/n recovers the intercept") {
  const auto exact = extrapolate_in_n({50, 100, 200}, [](int n) { return est(2.0 + 3.0 / n, 0.01); });
  CHECK(exact.value == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(exact.std_error > 0.01);
  CHECK(exact.replicates == 30);
  CHECK_THROWS_AS(extrapolate_in_n({50}, [](int) { return est(1.0, 0.1); }), Error);
}

TEST_CASE("suite numbers do not depend on the thread count") {
  Scenario sc = small_scenario(ou_model(1.0, 1.0, 0.5, 0.4, 1.0), 20, 20, 0.2, 64, 500);
  set_thread_count(1);
  const auto a = verify_first_moment(sc, cos1(1.0), 0.5);
  set_thread_count(3);
  const auto b = verify_first_moment(sc, cos1(1.0), 0.5);
  set_thread_count(1);
  for (std::size_t i = 0; i < a.checks.size(); ++i) {
    CHECK(a.checks[i].estimate.value == b.checks[i].estimate.value);
    CHECK(a.checks[i].estimate.std_error == b.checks[i].estimate.std_error);
  }
}
