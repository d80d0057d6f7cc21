#pragma once

#include <Eigen/Dense>

#include <complex>
#include <vector>

#include "flowsuper/particles.hpp"
#include "flowsuper/sde.hpp"
#include "flowsuper/test_function.hpp"

namespace flowsuper {

/// w * exp(-x^T P x / 2 + b^T x) on R^{N d}, with P real symmetric PSD and
/// w, b complex.
struct ExpQuadTerm {
  std::complex<double> weight;
  Eigen::MatrixXd quad;
  Eigen::VectorXcd linear;
};

/// Real part of a finite sum of ExpQuadTerms. The class contains constants,
/// cosines, Gaussian bumps and their tensor products, and is closed under
/// products, linear substitution and affine Gaussian transitions, so every
/// semigroup image needed by the moment formulas stays exact.
class ClosedFormFunction {
 public:
  ClosedFormFunction(int level, int d) : level_(level), d_(d) {}

  static ClosedFormFunction constant(int level, int d, double value);
  static ClosedFormFunction from_test_function(const TestFunction& f);

  int level() const noexcept { return level_; }
  int dim() const noexcept { return d_; }
  const std::vector<ExpQuadTerm>& terms() const noexcept { return terms_; }

  double operator()(const Eigen::Ref<const Eigen::MatrixXd>& points) const;

  ClosedFormFunction scaled(double factor) const;
  ClosedFormFunction& operator+=(const ClosedFormFunction& other);
  /// Pointwise product of functions on the same space.
  ClosedFormFunction operator*(const ClosedFormFunction& other) const;
  /// Tensor product: this on the first slots, other on the remaining ones.
  ClosedFormFunction tensor(const ClosedFormFunction& other) const;
  /// x' -> f(D x') for a (level d) x (new_level d) matrix D.
  ClosedFormFunction substitute(const Eigen::MatrixXd& map, int new_level) const;

  /// Image under the exact N-particle transition: y -> E_y[f(Y(t))].
  ClosedFormFunction transported(const GaussianTransition& transition) const;

  /// <f, mu^level> summing over distinct atoms.
  double integrate_product(const EmpiricalMeasure& mu) const;

  LevelFunction as_level_function() const;

 private:
  void push(ExpQuadTerm term);

  int level_;
  int d_;
  std::vector<ExpQuadTerm> terms_;
};

/// Selection matrix for the coalesced point of Phi_{p,q} (1-based p != q):
/// maps y in E^{l} to z in E^{l+1} with z_p = z_q = y_l and y_1..y_{l-1} in
/// order at the remaining positions.
Eigen::MatrixXd coalesce_map(int level_after, int p, int q, int d);

}  // namespace flowsuper
