#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "flowsuper/estimate.hpp"
#include "flowsuper/model.hpp"
#include "flowsuper/rng.hpp"
#include "flowsuper/sde.hpp"
#include "flowsuper/test_function.hpp"

namespace flowsuper {

/// Multi-index label: the generation-0 ancestor and the birth order at each
/// later branching. The path is empty unless lineage tracking is enabled.
struct ParticleLabel {
  int ancestor = 1;
  std::vector<std::uint32_t> path;

  friend bool operator==(const ParticleLabel&, const ParticleLabel&) = default;
};

enum class PlacementKind { Point, Grid, Gaussian, Explicit };

struct Placement {
  PlacementKind kind = PlacementKind::Point;
  Eigen::VectorXd at;                  // Point
  double lo = -1.0, hi = 1.0;          // Grid: evenly spaced along the diagonal of [lo, hi]^d
  Eigen::VectorXd mean;                // Gaussian
  double sd = 1.0;                     // Gaussian
  std::vector<Eigen::VectorXd> points; // Explicit (cycled when K exceeds the list)
};

struct ScaleSpec {
  int n = 1;
  int initial_count = 1;  // K_n
  Placement placement;
};

/// Rescaled empirical measure: atoms of mass `weight` each.
struct EmpiricalMeasure {
  Eigen::MatrixXd atoms;  // d x count
  double weight = 1.0;

  int count() const noexcept { return static_cast<int>(atoms.cols()); }
  double total_mass() const noexcept { return weight * count(); }
  /// X(h) for a level-1 test function.
  double integrate(const TestFunction& h) const;
};

class Population {
 public:
  int n = 1;
  int generation = 0;
  Eigen::MatrixXd positions;  // d x count
  std::vector<int> ancestors;
  std::vector<std::vector<std::uint32_t>> paths;  // filled only when track_lineage
  bool track_lineage = false;

  int count() const noexcept { return static_cast<int>(positions.cols()); }
  double unit_mass() const noexcept { return 1.0 / n; }
  double total_mass() const noexcept { return static_cast<double>(count()) / n; }
  double time() const noexcept { return static_cast<double>(generation) / n; }
  ParticleLabel label(int i) const;
  EmpiricalMeasure measure() const { return EmpiricalMeasure{positions, unit_mass()}; }
};

Population init_population(const ScaleSpec& scale, int d, RandomStream& rng, bool track_lineage = false);

/// Called with (time, positions, substep index) for substep index 0 (before
/// any motion) through the last substep (death positions, before branching).
using SubstepObserver = std::function<void(double, const Eigen::MatrixXd&, int)>;

struct StepOptions {
  MotionScheme scheme = MotionScheme::Euler;
  std::size_t population_cap = 10'000'000;
  SubstepObserver observer;
  /// Exact transition over one sub-step; built on demand when scheme is Exact.
  std::shared_ptr<const GaussianTransition> exact;
};

/// Number of equal motion sub-steps per lifetime 1/n given dt_max.
int substeps_per_generation(int n, double dt_max);

/// Offspring law used at death position y: mean 1 + gamma(y)/n and variance
/// sigma(y)^2, raised to the lattice minimum when sigma^2 is smaller.
OffspringLaw branching_law(const ValidatedModel& model, int n, const Eigen::Ref<const Eigen::VectorXd>& y);

Population step_generation(const Population& pop, const ValidatedModel& model, double dt_max, RandomStream& rng,
                           const StepOptions& options = {});

/// One replicate's recorded functionals at generation-aligned snapshot times.
struct TimeSeries {
  std::vector<double> times;                // [n t] / n for each requested snap time
  std::vector<std::vector<double>> values;  // [snap][observable]
  std::vector<double> mass;                 // [snap]
};

struct RunSpec {
  double horizon = 1.0;
  double dt_max = 0.01;
  std::vector<double> snap_times;
  std::vector<TestFunction> observables;
};

TimeSeries run_simulation(const ValidatedModel& model, const ScaleSpec& scale, const RunSpec& run, RandomStream& rng,
                          const StepOptions& options = {});

/// Independent replicates; replicate r uses source.stream(r) and the initial
/// placement is drawn once from source.child("placement").
std::vector<TimeSeries> simulate_replicates(const ValidatedModel& model, const ScaleSpec& scale, const RunSpec& run,
                                            std::size_t replicates, const StreamSource& source,
                                            const StepOptions& options = {});

/// Observable index meaning "total mass" in product_moment_estimate.
inline constexpr int kTotalMass = -1;

/// Mean and standard error of prod_i X_t(h_i) across replicates; t is rounded
/// to the generation grid like the snapshots.
MomentEstimate product_moment_estimate(const std::vector<TimeSeries>& runs, double t, const std::vector<int>& observables);

/// Mixed-time product X_{s}(h_1) X_{t}(h_2) ... with one time per factor.
MomentEstimate product_moment_estimate(const std::vector<TimeSeries>& runs, const std::vector<double>& times,
                                       const std::vector<int>& observables);

/// Per-replicate martingale statistics for level-1 test functions f_j:
///   z(k, j)  = X_t(f) - X_0(f) - int_0^t X_s((G + gamma) f) ds
///   qv(k, j) = int_0^t [X_s(sigma^2 f^2) + (X_s x X_s)(Lambda f)] ds
/// at the k-th check time, integrals by the trapezoid rule on the sub-step grid.
struct MartingaleTrace {
  std::vector<double> times;
  Eigen::MatrixXd z;
  Eigen::MatrixXd qv;
};

MartingaleTrace martingale_run(const ValidatedModel& model, const ScaleSpec& scale, double dt_max,
                               const std::vector<TestFunction>& fs, const std::vector<double>& check_times,
                               RandomStream& rng, const StepOptions& options = {});

}  // namespace flowsuper
