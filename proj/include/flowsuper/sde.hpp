#pragma once

#include <Eigen/Dense>

#include <span>

#include "flowsuper/model.hpp"
#include "flowsuper/rng.hpp"
#include "flowsuper/test_function.hpp"

namespace flowsuper {

/// N points in R^d stored column-wise (d x N) and the model time.
struct DiffusionState {
  Eigen::MatrixXd points;
  double time = 0.0;

  int count() const noexcept { return static_cast<int>(points.cols()); }
};

/// One Euler step's noise. dW is shared by every particle of the step.
struct NoiseIncrement {
  Eigen::VectorXd dW;  // m
  Eigen::MatrixXd dB;  // d x N
  double dt = 0.0;

  /// Draws dW first, then dB particle by particle.
  static NoiseIncrement draw(RandomStream& rng, int n_particles, int d, int m, double dt);
};

/// Reusable buffers for em_step_inplace.
struct EulerWorkspace {
  Eigen::MatrixXd b, e, c;
  void resize(int d, int m);
};

DiffusionState em_step(const DiffusionState& state, const ValidatedModel& model, const NoiseIncrement& noise);
void em_step_inplace(DiffusionState& state, const ValidatedModel& model, const NoiseIncrement& noise,
                     EulerWorkspace& ws);

/// Draws fresh noise and integrates for `duration` with equal sub-steps no
/// longer than dt_max.
void euler_advance(DiffusionState& state, const ValidatedModel& model, double duration, double dt_max,
                   RandomStream& rng, EulerWorkspace& ws);

/// Exact transition of the N-particle system over a fixed duration for an
/// affine drift with constant e and c:
///   Y^p(t) = flow * y^p + shift + Z^p,
///   Cov(Z^p, Z^q) = delta_pq * own_cov + common_cov.
class GaussianTransition {
 public:
  /// Simpson quadrature with `nodes` intervals unless A is diagonal (closed form).
  GaussianTransition(const ValidatedModel& model, double duration, int nodes = 64);

  double duration() const noexcept { return duration_; }
  const Eigen::MatrixXd& flow() const noexcept { return flow_; }
  const Eigen::VectorXd& shift() const noexcept { return shift_; }
  const Eigen::MatrixXd& own_cov() const noexcept { return own_cov_; }
  const Eigen::MatrixXd& common_cov() const noexcept { return common_cov_; }

  /// Joint (N d) x (N d) covariance, particle-major ordering.
  Eigen::MatrixXd joint_covariance(int n_particles) const;
  /// A factor L with L L^T equal to the joint covariance (symmetric square root).
  Eigen::MatrixXd joint_factor(int n_particles) const;

  /// Maps N*d standard normals to the exact transition from `state`.
  DiffusionState apply(const DiffusionState& state, std::span<const double> normals) const;
  DiffusionState sample(const DiffusionState& state, RandomStream& rng) const;

 private:
  double duration_;
  int d_;
  Eigen::MatrixXd flow_;
  Eigen::VectorXd shift_;
  Eigen::MatrixXd own_cov_;
  Eigen::MatrixXd common_cov_;
  Eigen::MatrixXd own_root_;
};

DiffusionState exact_gaussian_step(const DiffusionState& state, const ValidatedModel& model, double duration,
                                   RandomStream& rng);

struct PairCovariance {
  Eigen::MatrixXd d_matrix;  // sum_k e_ik(x) e_jk(y) + a_ij(x, y)
  Eigen::MatrixXd a_matrix;  // sum_l c_il(x) c_jl(y)
};

PairCovariance pair_covariance(const ValidatedModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                               const Eigen::Ref<const Eigen::VectorXd>& y);

/// Generator G_N of the correlated N-particle diffusion applied to f at points (d x N).
double generator(const ValidatedModel& model, const TestFunction& f, const Eigen::Ref<const Eigen::MatrixXd>& points);

enum class MotionScheme { Euler, Exact };

/// Advances `state` by `duration` with the chosen scheme; Exact requires an affine model.
void advance(DiffusionState& state, const ValidatedModel& model, double duration, double dt_max,
             MotionScheme scheme, RandomStream& rng, EulerWorkspace& ws);

}  // namespace flowsuper
