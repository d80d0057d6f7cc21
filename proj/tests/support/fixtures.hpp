#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "flowsuper/model.hpp"
#include "flowsuper/particles.hpp"
#include "flowsuper/rng.hpp"
#include "flowsuper/test_function.hpp"

namespace fixtures {

using namespace flowsuper;

inline Eigen::MatrixXd mat(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }
inline Eigen::VectorXd vec(double v) { return Eigen::VectorXd::Constant(1, v); }

inline ModelSpec scalar_spec(double gamma, double sigma) {
  ModelSpec s;
  s.d = 1;
  s.m = 1;
  s.b = CoefficientField::constant(mat(0.0));
  s.e = CoefficientField::constant(mat(1.0));
  s.c = CoefficientField::constant(mat(0.0));
  s.gamma = CoefficientField::scalar(gamma);
  s.sigma = CoefficientField::scalar(sigma);
  s.gamma_bound = std::abs(gamma);
  s.sigma_bound = sigma;
  return s;
}

/// d = m = 1: dY = -rate Y dt + e dB + c dW, constant branching.
inline ValidatedModel ou_model(double rate, double e, double c, double gamma, double sigma) {
  auto s = scalar_spec(gamma, sigma);
  s.b = CoefficientField::affine(mat(-rate), vec(0.0));
  s.e = CoefficientField::constant(mat(e));
  s.c = CoefficientField::constant(mat(c));
  return validate_model(s);
}

/// Brownian motion with e, c constants and constant branching.
inline ValidatedModel brownian_model(double e, double c, double gamma, double sigma) {
  auto s = scalar_spec(gamma, sigma);
  s.e = CoefficientField::constant(mat(e));
  s.c = CoefficientField::constant(mat(c));
  return validate_model(s);
}

inline EntryFunction entry(Profile p, double amplitude, double omega, double phase, double offset) {
  EntryFunction f;
  f.profile = p;
  f.amplitude = amplitude;
  f.omega = vec(omega);
  f.phase = phase;
  f.offset = offset;
  return f;
}

inline EmpiricalMeasure point_mass(double x, double mass = 1.0) {
  return EmpiricalMeasure{Eigen::MatrixXd::Constant(1, 1, x), mass};
}

inline StreamSource source(std::uint64_t seed, const char* tag) { return StreamSource(RngPolicy(seed), tag); }

inline TestFunction cos1(double theta, double phi = 0.0) { return TestFunction::cosine(vec(theta), phi); }

/// Two-sample z-score.
inline double zscore(double a, double sa, double b, double sb) {
  return (a - b) / std::max(std::sqrt(sa * sa + sb * sb), 1e-12);
}

}  // namespace fixtures
