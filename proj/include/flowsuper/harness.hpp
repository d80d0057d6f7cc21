#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "flowsuper/estimate.hpp"
#include "flowsuper/model.hpp"
#include "flowsuper/particles.hpp"
#include "flowsuper/rng.hpp"
#include "flowsuper/sde.hpp"
#include "flowsuper/test_function.hpp"

namespace flowsuper {

/// Which deviations count against a check. Upper fails only when the
/// estimate is too large, Lower only when it is too small.
enum class Side { TwoSided, Upper, Lower };

/// Pass rule: z within z_threshold (when set), relative error within
/// relative_cap (when set), estimate - reference within absolute_cap (when set).
struct Tolerance {
  std::optional<double> z_threshold = 3.0;
  std::optional<double> relative_cap;
  std::optional<double> absolute_cap;
  Side side = Side::TwoSided;
};

inline constexpr double kStdErrorFloor = 1e-12;

struct VerificationCheck {
  std::string name;
  MomentEstimate estimate;
  MomentEstimate reference;
  double z = 0.0;
  double relative_error = 0.0;
  Tolerance tolerance;
  bool pass = false;
};

VerificationCheck make_check(std::string name, const MomentEstimate& estimate, const MomentEstimate& reference,
                             const Tolerance& tolerance = {});

struct VerificationReport {
  std::string suite;
  std::vector<VerificationCheck> checks;

  bool passed() const;
};

/// Everything a suite needs to run the particle, dual and formula routes.
struct Scenario {
  ValidatedModel model;
  ScaleSpec scale;
  double dt_max = 0.01;
  std::size_t replicates = 2000;
  std::size_t dual_paths = 50000;
  std::size_t formula_paths = 0;  // 0 disables the Monte Carlo recursion route
  int outer_nodes = 32;
  int inner_nodes = 16;
  MotionScheme scheme = MotionScheme::Euler;
  std::size_t population_cap = 10'000'000;
  std::uint64_t seed = 0;

  StreamSource source(std::string_view tag) const { return StreamSource(RngPolicy(seed), std::string(tag)); }
};

/// Initial measure nu = X^n_0 as used by the particle runs.
EmpiricalMeasure initial_measure(const Scenario& sc);

/// The scale with a Gaussian placement replaced by the atoms of initial_measure.
ScaleSpec initial_scale(const Scenario& sc);

/// [n t] / n
double snapped_time(const Scenario& sc, double t);

/// Particle vs formula, dual vs formula and particle vs dual for E X_t(h).
VerificationReport verify_first_moment(const Scenario& sc, const TestFunction& h, double t, const Tolerance& tol = {});

/// E X_s(h1) X_t(h2) by the corollary closed form, the recursion (s = t), the
/// dual and the particle system; analytic routes compared by relative error.
VerificationReport verify_second_moment(const Scenario& sc, const TestFunction& h1, const TestFunction& h2, double s,
                                        double t, const Tolerance& tol = {}, double analytic_relative_cap = 1e-3);

/// Empirical E exp(-rho X_t(1)) against mass_laplace, one check per rho.
VerificationReport verify_laplace(const Scenario& sc, const std::vector<double>& rhos, double t,
                                  const Tolerance& tol = {});

/// Mean of Z_t(f) against 0 and Var Z_t(f) against the mean predicted
/// quadratic variation, for every f and check time.
VerificationReport verify_martingale(const Scenario& sc, const std::vector<TestFunction>& fs,
                                     const std::vector<double>& times, const Tolerance& tol = {},
                                     double qv_relative_cap = 0.15);

/// Var Z_t(f) change between a model without and with common noise against
/// the predicted change of the quadratic variation.
VerificationReport verify_common_noise(const Scenario& without, const Scenario& with,
                                       const std::vector<TestFunction>& fs, double t,
                                       double qv_relative_cap = 0.15);

/// Operator frequencies at level 2 (chi-square) and jump rates per level.
VerificationReport verify_dual_skeleton(std::size_t skeletons, int max_level, double horizon,
                                        const StreamSource& source);

/// Analytic mean/variance error of offspring_law over random targets.
VerificationReport verify_offspring_laws(std::size_t draws, const StreamSource& source);

struct WeakOrderStudy {
  std::vector<double> dts;
  std::vector<MomentEstimate> errors;  // E f(Euler) - E f(exact), coupled
  double slope = 0.0;
};

/// Coupled Euler vs exact transitions from y0 for an affine single-particle model.
WeakOrderStudy weak_order_study(const ValidatedModel& model, const Eigen::VectorXd& y0, const TestFunction& f,
                                double horizon, const std::vector<double>& dts, std::size_t paths,
                                const StreamSource& source);

VerificationReport verify_weak_order(const WeakOrderStudy& study, double min_slope = 0.8);

struct MollificationReport {
  std::vector<double> widths;
  std::vector<MomentEstimate> differences;  // E X_t^{(i)}(h) - E X_t^{raw}(h), paired
  MomentEstimate raw;
};

/// Particle runs with gamma and sigma mollified at each width, paired with the
/// raw-coefficient run on common random numbers.
MollificationReport mollification_experiment(const Scenario& raw, const std::vector<double>& widths,
                                             const TestFunction& h, double t);

/// |d_{i+1}| <= |d_i| + 2 combined SE for consecutive widths.
VerificationReport verify_mollification_trend(const MollificationReport& report);

/// Weighted linear fit of estimates against 1/n, evaluated at 1/n = 0.
MomentEstimate extrapolate_in_n(const std::vector<int>& ns, const std::function<MomentEstimate(int)>& estimate_at);

}  // namespace flowsuper
