#include <doctest.h>

#include <cmath>

#include "../support/fixtures.hpp"
#include "flowsuper/errors.hpp"
#include "flowsuper/gaussian_form.hpp"
#include "flowsuper/sde.hpp"

using namespace flowsuper;
using namespace fixtures;

TEST_CASE("em_step with zero dynamics only advances time") {
  auto s = scalar_spec(0.0, 0.0);
  s.e = CoefficientField::constant(mat(0.0));
  const auto model = validate_model(s);
  RandomStream rng(3);
  DiffusionState st{Eigen::MatrixXd::Random(1, 5), 0.2};
  const auto noise = NoiseIncrement::draw(rng, 5, 1, 1, 0.01);
  const auto out = em_step(st, model, noise);
  CHECK(out.points == st.points);
  CHECK(out.time == doctest::Approx(0.21));
}

TEST_CASE("em_step direct substitution with shared dW") {
  const auto model = brownian_model(1.0, 1.0, 0.0, 0.0);
  DiffusionState st{Eigen::MatrixXd::Zero(1, 2), 0.0};
  NoiseIncrement noise;
  noise.dt = 0.01;
  noise.dW = vec(0.3);
  noise.dB.resize(1, 2);
  noise.dB << 0.1, -0.2;
  const auto out = em_step(st, model, noise);
  CHECK(out.points(0, 0) == doctest::Approx(0.4));
  CHECK(out.points(0, 1) == doctest::Approx(0.1));
}

TEST_CASE("em_step errors") {
  const auto model = ou_model(-1.0, 1.0, 0.0, 0.0, 0.0);  // dY = +Y dt, explodes from 1e308
  DiffusionState st{Eigen::MatrixXd::Constant(1, 1, 1e308), 0.0};
  NoiseIncrement noise;
  noise.dt = 1.0;
  noise.dW = vec(0.0);
  noise.dB = Eigen::MatrixXd::Zero(1, 1);
  CHECK_THROWS_AS(em_step(st, model, noise), Error);
  try {
    em_step(st, model, noise);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFinite);
  }
  noise.dB = Eigen::MatrixXd::Zero(1, 3);
  try {
    em_step(st, model, noise);
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimensionMismatch);
  }
}

TEST_CASE("Euler OU mean at t=1") {
  const auto model = ou_model(1.0, 1.0, 0.0, 0.0, 0.0);
  const int paths = 100000;
  const double dt = 0.01;
  double sum = 0.0, sum2 = 0.0;
  RandomStream rng(11);
  EulerWorkspace ws;
  for (int r = 0; r < paths; ++r) {
    DiffusionState st{Eigen::MatrixXd::Constant(1, 1, 1.0), 0.0};
    euler_advance(st, model, 1.0, dt, rng, ws);
    sum += st.points(0, 0);
    sum2 += st.points(0, 0) * st.points(0, 0);
  }
  const double mean = sum / paths;
  const double se = std::sqrt((sum2 / paths - mean * mean) / paths);
  // exact OU mean e^{-1}; Euler bias is O(dt)
  CHECK(std::abs(mean - std::exp(-1.0)) <= 3.0 * se + 2.0 * dt * std::exp(-1.0));
}

TEST_CASE("exact Gaussian transition examples") {
  SUBCASE("Brownian motion") {
    const auto model = brownian_model(1.0, 0.0, 0.0, 0.0);
    const GaussianTransition tr(model, 0.7);
    CHECK(tr.flow()(0, 0) == doctest::Approx(1.0));
    CHECK(tr.shift()(0) == doctest::Approx(0.0));
    CHECK(tr.joint_covariance(1)(0, 0) == doctest::Approx(0.7));
  }
  SUBCASE("OU") {
    const double dt = 0.4;
    const GaussianTransition tr(ou_model(1.0, 1.0, 0.0, 0.0, 0.0), dt);
    CHECK(tr.flow()(0, 0) == doctest::Approx(std::exp(-dt)));
    CHECK(tr.joint_covariance(1)(0, 0) == doctest::Approx((1.0 - std::exp(-2.0 * dt)) / 2.0));
  }
  SUBCASE("two particles driven only by common noise") {
    const GaussianTransition tr(brownian_model(0.0, 1.0, 0.0, 0.0), 0.3);
    const auto cov = tr.joint_covariance(2);
    CHECK(cov(0, 1) == doctest::Approx(0.3));
    CHECK(cov(0, 0) == doctest::Approx(0.3));
    CHECK(cov(1, 1) == doctest::Approx(0.3));
  }
  SUBCASE("not affine") {
    auto s = scalar_spec(0.0, 0.0);
    s.e = CoefficientField::bounded_smooth(1, 1, {entry(Profile::Sine, 0.5, 1.0, 0.0, 1.0)});
    const auto model = validate_model(s);
    CHECK_THROWS_AS(GaussianTransition(model, 0.1), Error);
  }
}

TEST_CASE("non-diagonal drift: Lyapunov residual and PSD covariance") {
  ModelSpec s;
  s.d = 2;
  s.m = 1;
  Eigen::Matrix2d a;
  a << -1.0, 0.5, -0.3, -2.0;
  s.b = CoefficientField::affine(a, Eigen::Vector2d(0.2, -0.1));
  Eigen::Matrix2d e;
  e << 1.0, 0.2, 0.0, 0.7;
  s.e = CoefficientField::constant(e);
  s.c = CoefficientField::constant(Eigen::Vector2d(0.5, -0.4));
  s.gamma = CoefficientField::scalar(0.0);
  s.sigma = CoefficientField::scalar(0.0);
  const auto model = validate_model(s);
  const double t = 0.9;
  const GaussianTransition tr(model, t, 128);
  // A S + S A^T = e^{At} Q e^{A^T t} - Q for S = int_0^t e^{As} Q e^{A^T s} ds
  auto expm = [&](double tau) {
    Eigen::EigenSolver<Eigen::Matrix2d> es(a);
    const Eigen::Matrix2cd v = es.eigenvectors();
    const Eigen::Vector2cd lam = es.eigenvalues();
    Eigen::Matrix2cd dd = Eigen::Matrix2cd::Zero();
    for (int i = 0; i < 2; ++i) dd(i, i) = std::exp(lam(i) * tau);
    return Eigen::Matrix2d((v * dd * v.inverse()).real());
  };
  const Eigen::Matrix2d ex = expm(t);
  CHECK((tr.flow() - ex).norm() < 1e-10);
  // mean shift solves A m = (e^{At} - I) v
  CHECK((a * tr.shift() - (ex - Eigen::Matrix2d::Identity()) * Eigen::Vector2d(0.2, -0.1)).norm() < 1e-10);
  const Eigen::Matrix2d q = e * e.transpose();
  const Eigen::Matrix2d own = tr.own_cov();
  CHECK((a * own + own * a.transpose() - (ex * q * ex.transpose() - q)).norm() < 1e-8);
  const Eigen::MatrixXd joint = tr.joint_covariance(3);
  CHECK((joint - joint.transpose()).norm() == 0.0);
  CHECK(Eigen::LLT<Eigen::MatrixXd>(joint).info() == Eigen::Success);
}

TEST_CASE("pair_covariance examples") {
  const double k = 0.6;
  const auto m = brownian_model(1.0, k, 0.0, 0.0);
  const auto pc = pair_covariance(m, vec(0.3), vec(-2.0));
  CHECK(pc.d_matrix(0, 0) == doctest::Approx(1.0 + k * k));
  CHECK(pc.a_matrix(0, 0) == doctest::Approx(k * k));
  const auto m0 = brownian_model(1.3, 0.0, 0.0, 0.0);
  CHECK(pair_covariance(m0, vec(1.0), vec(2.0)).a_matrix(0, 0) == 0.0);
  CHECK(pair_covariance(m0, vec(1.0), vec(2.0)).d_matrix(0, 0) == doctest::Approx(1.69));
  auto s = scalar_spec(0.0, 0.0);
  s.c = CoefficientField::bounded_smooth(1, 1, {entry(Profile::Sine, 1.0, 1.0, 0.0, 0.0)});
  const auto ms = validate_model(s);
  CHECK(pair_covariance(ms, vec(M_PI / 2), vec(M_PI / 2)).a_matrix(0, 0) == doctest::Approx(1.0));
  CHECK(pair_covariance(ms, vec(0.4), vec(1.1)).a_matrix(0, 0) == doctest::Approx(std::sin(0.4) * std::sin(1.1)));
}

TEST_CASE("common noise alone moves all particles identically") {
  const auto model = brownian_model(0.0, 0.8, 0.0, 0.0);
  RandomStream rng(5);
  DiffusionState st{Eigen::RowVectorXd::LinSpaced(6, -1.0, 1.0), 0.0};
  const Eigen::MatrixXd before = st.points;
  EulerWorkspace ws;
  euler_advance(st, model, 0.5, 0.01, rng, ws);
  const Eigen::MatrixXd shift = st.points - before;
  for (int p = 1; p < 6; ++p) CHECK(std::abs(shift(0, p) - shift(0, 0)) < 1e-12);
}

TEST_CASE("coupled Euler vs exact OU weak error shrinks linearly") {
  const auto model = ou_model(1.0, 1.0, 0.0, 0.0, 0.0);
  // Analytic Euler weak error for E cos(Y_1) from y = 1: Euler gives a Gaussian with
  // mean (1-dt)^k and variance dt * sum_j (1-dt)^{2j}.
  auto euler_error = [](double dt) {
    const int k = static_cast<int>(std::lround(1.0 / dt));
    const double mean = std::pow(1.0 - dt, k);
    const double var = dt * (1.0 - std::pow(1.0 - dt, 2 * k)) / (1.0 - (1.0 - dt) * (1.0 - dt));
    const double exact = std::cos(std::exp(-1.0)) * std::exp(-0.5 * (1.0 - std::exp(-2.0)) / 2.0);
    return std::cos(mean) * std::exp(-0.5 * var) - exact;
  };
  CHECK(euler_error(0.02) == doctest::Approx(-1.087e-3).epsilon(2e-3));
  std::vector<double> errs;
  for (double dt : {0.02, 0.01, 0.005}) errs.push_back(std::abs(euler_error(dt)));
  CHECK(std::log(errs[0] / errs[2]) / std::log(4.0) >= 0.8);
}

TEST_CASE("generator matches short-time expectation") {
  SUBCASE("affine model, exact expectation") {
    ModelSpec s = scalar_spec(0.0, 0.0);
    s.b = CoefficientField::affine(mat(-0.7), vec(0.2));
    s.e = CoefficientField::constant(mat(0.9));
    s.c = CoefficientField::constant(mat(0.5));
    const auto model = validate_model(s);
    const auto f = TestFunction::tensor({TestFunction::cosine(vec(1.3), 0.4), TestFunction::bump(0.8, vec(0.3))});
    const auto cf = ClosedFormFunction::from_test_function(f);
    Eigen::MatrixXd y(1, 2);
    y << 0.2, -0.5;
    const double g = generator(model, f, y);
    double prev = 1e9;
    for (double dt : {1e-2, 1e-3, 1e-4}) {
      const double ef = cf.transported(GaussianTransition(model, dt))(y);
      const double err = std::abs((ef - f.value(y)) / dt - g);
      CHECK(err < prev);
      CHECK(err < 50.0 * dt);
      prev = err;
    }
  }
  SUBCASE("state-dependent coefficients, one Euler step by Gauss-Hermite") {
    ModelSpec s = scalar_spec(0.0, 0.0);
    s.b = CoefficientField::bounded_smooth(1, 1, {entry(Profile::Sine, 0.4, 1.0, 0.3, 0.1)});
    s.e = CoefficientField::bounded_smooth(1, 1, {entry(Profile::Tanh, 0.3, 0.8, 0.0, 1.0)});
    s.c = CoefficientField::bounded_smooth(1, 1, {entry(Profile::Sine, 0.5, 1.2, -0.2, 0.2)});
    const auto model = validate_model(s);
    const auto f = TestFunction::tensor({TestFunction::cosine(vec(0.9), 0.1), TestFunction::cosine(vec(1.4), -0.3)});
    Eigen::MatrixXd y(1, 2);
    y << 0.3, -0.6;
    // 3-point Gauss-Hermite is exact for polynomials up to degree 5 in each normal
    const double gx[3] = {-std::sqrt(3.0), 0.0, std::sqrt(3.0)};
    const double gw[3] = {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0};
    const double g = generator(model, f, y);
    double prev = 1e9;
    for (double dt : {1e-2, 1e-3, 1e-4}) {
      double ef = 0.0;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          for (int k = 0; k < 3; ++k) {
            NoiseIncrement n;
            n.dt = dt;
            n.dW = vec(std::sqrt(dt) * gx[k]);
            n.dB.resize(1, 2);
            n.dB << std::sqrt(dt) * gx[i], std::sqrt(dt) * gx[j];
            ef += gw[i] * gw[j] * gw[k] * f.value(em_step(DiffusionState{y, 0.0}, model, n).points);
          }
      const double err = std::abs((ef - f.value(y)) / dt - g);
      CHECK(err < prev);
      prev = err;
    }
    CHECK(prev < 1e-2);
  }
}

TEST_CASE("test function derivatives match finite differences") {
  const auto f = TestFunction::tensor({TestFunction::cosine(Eigen::Vector2d(0.7, -1.1), 0.3),
                                       TestFunction::bump(0.6, Eigen::Vector2d(0.2, -0.4)), TestFunction::one(2)});
  Eigen::MatrixXd x(2, 3);
  x << 0.3, -0.2, 1.0, 0.5, 0.1, -2.0;
  const double h = 1e-5;
  for (int p = 0; p < 3; ++p) {
    const auto g = f.slot_gradient(x, p);
    for (int i = 0; i < 2; ++i) {
      Eigen::MatrixXd xp = x, xm = x;
      xp(i, p) += h;
      xm(i, p) -= h;
      const double fd = (f.value(xp) - f.value(xm)) / (2 * h);
      CHECK(g(i) == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
      for (int q = 0; q < 3; ++q) {
        const auto hpq = f.block_hessian(x, p, q);
        const auto gp = f.slot_gradient(xp, q), gm = f.slot_gradient(xm, q);
        for (int j = 0; j < 2; ++j) CHECK(hpq(i, j) == doctest::Approx((gp(j) - gm(j)) / (2 * h)).epsilon(1e-6).scale(1.0));
      }
    }
  }
}
