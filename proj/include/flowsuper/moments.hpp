#pragma once

#include <Eigen/Dense>

#include <vector>

#include "flowsuper/estimate.hpp"
#include "flowsuper/gaussian_form.hpp"
#include "flowsuper/model.hpp"
#include "flowsuper/particles.hpp"
#include "flowsuper/rng.hpp"
#include "flowsuper/sde.hpp"
#include "flowsuper/test_function.hpp"

namespace flowsuper {

/// Gauss-Legendre rule mapped to [0, 1].
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

QuadratureRule gauss_legendre(int n);

struct PathSettings {
  std::size_t paths = 10000;
  double dt_max = 0.01;
  MotionScheme scheme = MotionScheme::Euler;
};

struct FeynmanKacEstimate {
  double value = 0.0;
  double std_error = 0.0;
  int level = 0;
  double t = 0.0;
  std::size_t paths = 0;
};

/// T^N_t h(y) = E_y[exp(int_0^t sum_p gamma(Y^p)) h(Y_t)] by Monte Carlo,
/// path r drawing from source.stream(r).
FeynmanKacEstimate feynman_kac(const LevelFunction& h, const Eigen::Ref<const Eigen::MatrixXd>& y, double t,
                           const ValidatedModel& model, const PathSettings& settings, const StreamSource& source);

/// x -> (1/2) sum_{p != q} sigma(x_last)^2 h(Phi_{p,q} x), a function on E^{N-1}.
LevelFunction coalesce_sum(const LevelFunction& h, const ValidatedModel& model);

/// Same for a closed-form h with constant sigma.
ClosedFormFunction coalesce_sum(const ClosedFormFunction& h, double sigma);

/// Exact T^N_t for affine motion and constant branching rate.
ClosedFormFunction feynman_kac_closed(const ClosedFormFunction& h, double t, const ValidatedModel& model);

enum class FormulaBackend { Closed, MonteCarlo };

struct FormulaSettings {
  FormulaBackend backend = FormulaBackend::Closed;
  int outer_nodes = 32;  // single time integral
  int inner_nodes = 16;  // per axis of the double integral
  PathSettings paths;
};

/// E <h, X_t^n> from the moment recursion, n <= 3.
MomentEstimate moment_formula(const TestFunction& h, const EmpiricalMeasure& nu, double t,
                              const ValidatedModel& model, const FormulaSettings& settings,
                              const StreamSource& source);

/// exp(gamma t) nu(S_t h) for constant gamma and affine motion.
MomentEstimate closed_form_first_moment(const TestFunction& h, const EmpiricalMeasure& nu, double t,
                                        const ValidatedModel& model);

struct ClosedFormResult {
  MomentEstimate estimate;
  /// |value(nodes) - value(nodes / 2)|
  double quadrature_error = 0.0;
};

/// E[X_s(h1) X_t(h2)] for s <= t, constant branching and affine motion.
ClosedFormResult closed_form_second_moment(const TestFunction& h1, const TestFunction& h2, double s, double t,
                                           const EmpiricalMeasure& nu, const ValidatedModel& model,
                                           int nodes = 32);

/// Psi(rho, t) solving Psi' = gamma Psi - sigma^2 Psi^2 / 2, Psi(0) = rho.
double laplace_exponent(double rho, double t, double gamma, double sigma);

/// E exp(-rho <1, X_t>) for total initial mass x under constant branching.
double mass_laplace(double rho, double t, double gamma, double sigma, double initial_mass);

struct ExpansionTerm {
  int order = 0;
  MomentEstimate iterated;  // iterated time integral form
  MomentEstimate power;     // (1/i!) (int V)^i form
  double relative_error = 0.0;
};

/// Compares the two forms of the i-th Feynman-Kac expansion term for i = 1..max_order (max 2).
std::vector<ExpansionTerm> fk_expansion_check(const LevelFunction& h, const Eigen::Ref<const Eigen::MatrixXd>& y,
                                              double t, const ValidatedModel& model, int max_order,
                                              const PathSettings& settings, const StreamSource& source,
                                              int nodes = 8);

/// Points for Phi_{p,q}: d x (l+1) from d x l, 1-based p != q.
Eigen::MatrixXd coalesce_points(const Eigen::Ref<const Eigen::MatrixXd>& y, int p, int q);

}  // namespace flowsuper
