#include "flowsuper/sde.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <vector>

#include "flowsuper/errors.hpp"

namespace flowsuper {

NoiseIncrement NoiseIncrement::draw(RandomStream& rng, int n_particles, int d, int m, double dt) {
  NoiseIncrement n;
  n.dt = dt;
  const double s = std::sqrt(dt);
  n.dW.resize(m);
  for (int l = 0; l < m; ++l) n.dW(l) = s * rng.normal();
  n.dB.resize(d, n_particles);
  for (int p = 0; p < n_particles; ++p)
    for (int i = 0; i < d; ++i) n.dB(i, p) = s * rng.normal();
  return n;
}

void EulerWorkspace::resize(int d, int m) {
  if (b.rows() != d || c.cols() != m) {
    b.resize(d, 1);
    e.resize(d, d);
    c.resize(d, m);
  }
}

void em_step_inplace(DiffusionState& state, const ValidatedModel& model, const NoiseIncrement& noise,
                     EulerWorkspace& ws) {
  const int d = model.d();
  const int m = model.m();
  if (noise.dW.size() != m || noise.dB.rows() != d || noise.dB.cols() != state.count() || state.points.rows() != d)
    throw Error(ErrorCode::DimensionMismatch, "noise increment does not match (N, d, m)");
  ws.resize(d, m);
  const auto& spec = model.spec();
  const bool e_const = spec.e.is_constant();
  const bool c_const = spec.c.is_constant();
  if (e_const) ws.e = spec.e.constant_value();
  if (c_const) ws.c = spec.c.constant_value();
  for (int p = 0; p < state.count(); ++p) {
    auto y = state.points.col(p);
    spec.b.evaluate_into(y, ws.b);
    if (!e_const) spec.e.evaluate_into(y, ws.e);
    if (!c_const) spec.c.evaluate_into(y, ws.c);
    y += ws.b.col(0) * noise.dt + ws.e * noise.dB.col(p) + ws.c * noise.dW;
    if (!y.allFinite()) throw Error(ErrorCode::NonFinite, "Euler step produced a non-finite coordinate");
  }
  state.time += noise.dt;
}

DiffusionState em_step(const DiffusionState& state, const ValidatedModel& model, const NoiseIncrement& noise) {
  DiffusionState out = state;
  EulerWorkspace ws;
  em_step_inplace(out, model, noise, ws);
  return out;
}

void euler_advance(DiffusionState& state, const ValidatedModel& model, double duration, double dt_max,
                   RandomStream& rng, EulerWorkspace& ws) {
  if (duration <= 0.0) return;
  const int steps = std::max(1, static_cast<int>(std::ceil(duration / dt_max - 1e-9)));
  const double dt = duration / steps;
  for (int k = 0; k < steps; ++k) {
    auto noise = NoiseIncrement::draw(rng, state.count(), model.d(), model.m(), dt);
    em_step_inplace(state, model, noise, ws);
  }
}

namespace {

// Integral of exp(A s) M exp(A^T s) over [0, t].
Eigen::MatrixXd lyapunov_integral(const Eigen::MatrixXd& a, const Eigen::MatrixXd& m, double t, int nodes,
                                  bool diagonal) {
  const auto d = a.rows();
  if (diagonal) {
    Eigen::MatrixXd out(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        const double rate = a(i, i) + a(j, j);
        const double factor = std::abs(rate * t) < 1e-12 ? t * (1.0 + 0.5 * rate * t) : std::expm1(rate * t) / rate;
        out(i, j) = m(i, j) * factor;
      }
    }
    return out;
  }
  const int n = nodes % 2 == 0 ? nodes : nodes + 1;
  const double h = t / n;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d, d);
  for (int k = 0; k <= n; ++k) {
    const double w = (k == 0 || k == n) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
    const Eigen::MatrixXd ex = (a * (h * k)).exp();
    out += w * ex * m * ex.transpose();
  }
  out *= h / 3.0;
  return 0.5 * (out + out.transpose());
}

}  // namespace

namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

GaussianTransition::GaussianTransition(const ValidatedModel& model, double duration, int nodes)
    : duration_(duration), d_(model.d()) {
  if (!model.is_affine()) throw Error(ErrorCode::NotAffine, "exact transition needs affine b and constant e, c");
  const auto& spec = model.spec();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d_, d_);
  Eigen::VectorXd v(d_);
  if (spec.b.kind() == FieldKind::Affine) {
    a = spec.b.affine_matrix();
    v = spec.b.affine_offset();
  } else {
    v = spec.b.constant_value().col(0);
  }
  const bool diagonal = a.isDiagonal(0.0);
  if (diagonal) {
    flow_ = Eigen::MatrixXd::Zero(d_, d_);
    shift_.resize(d_);
    for (int i = 0; i < d_; ++i) {
      const double r = a(i, i);
      flow_(i, i) = std::exp(r * duration);
      shift_(i) = v(i) * (std::abs(r * duration) < 1e-12 ? duration : std::expm1(r * duration) / r);
    }
  } else {
    // exp of the augmented generator [[A, v], [0, 0]] yields both exp(A t) and int_0^t exp(A s) v ds.
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(d_ + 1, d_ + 1);
    aug.topLeftCorner(d_, d_) = a * duration;
    aug.topRightCorner(d_, 1) = v * duration;
    const Eigen::MatrixXd ex = aug.exp();
    flow_ = ex.topLeftCorner(d_, d_);
    shift_ = ex.topRightCorner(d_, 1);
  }
  const Eigen::MatrixXd& e = spec.e.constant_value();
  const Eigen::MatrixXd& c = spec.c.constant_value();
  own_cov_ = lyapunov_integral(a, e * e.transpose(), duration, nodes, diagonal);
  common_cov_ = lyapunov_integral(a, c * c.transpose(), duration, nodes, diagonal);
  own_root_ = psd_sqrt(own_cov_);
}

Eigen::MatrixXd GaussianTransition::joint_covariance(int n_particles) const {
  const int nd = n_particles * d_;
  Eigen::MatrixXd cov(nd, nd);
  for (int p = 0; p < n_particles; ++p)
    for (int q = 0; q < n_particles; ++q)
      cov.block(p * d_, q * d_, d_, d_) = (p == q) ? Eigen::MatrixXd(own_cov_ + common_cov_) : common_cov_;
  return cov;
}

Eigen::MatrixXd GaussianTransition::joint_factor(int n_particles) const {
  const Eigen::MatrixXd cov = joint_covariance(n_particles);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

DiffusionState GaussianTransition::apply(const DiffusionState& state, std::span<const double> normals) const {
  const int n = state.count();
  if (static_cast<int>(normals.size()) != n * d_) throw Error(ErrorCode::DimensionMismatch, "need N*d normals");
  // The joint covariance is I (x) own + 1 1^T (x) common. Its symmetric root
  // acts as sqrt(own) off the particle mean and sqrt(own + N common) on it.
  const Eigen::Map<const Eigen::MatrixXd> xi(normals.data(), d_, n);
  Eigen::VectorXd shared = Eigen::VectorXd::Zero(d_);
  if (!common_cov_.isZero(0.0)) {
    const Eigen::VectorXd mean = xi.rowwise().mean();
    const double nn = static_cast<double>(n);
    if (d_ == 1) {
      shared(0) = (std::sqrt(own_cov_(0, 0) + nn * common_cov_(0, 0)) - own_root_(0, 0)) * mean(0);
    } else {
      shared = psd_sqrt(own_cov_ + nn * common_cov_) * mean - own_root_ * mean;
    }
  }
  DiffusionState out;
  out.time = state.time + duration_;
  out.points.resize(d_, n);
  for (int p = 0; p < n; ++p)
    out.points.col(p) = flow_ * state.points.col(p) + shift_ + own_root_ * xi.col(p) + shared;
  if (!out.points.allFinite()) throw Error(ErrorCode::NonFinite, "exact transition produced a non-finite coordinate");
  return out;
}

DiffusionState GaussianTransition::sample(const DiffusionState& state, RandomStream& rng) const {
  std::vector<double> xi(static_cast<std::size_t>(state.count() * d_));
  for (auto& v : xi) v = rng.normal();
  return apply(state, xi);
}

DiffusionState exact_gaussian_step(const DiffusionState& state, const ValidatedModel& model, double duration,
                                   RandomStream& rng) {
  return GaussianTransition(model, duration).sample(state, rng);
}

PairCovariance pair_covariance(const ValidatedModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                               const Eigen::Ref<const Eigen::VectorXd>& y) {
  const auto& spec = model.spec();
  const Eigen::MatrixXd ex = spec.e.evaluate(x), ey = spec.e.evaluate(y);
  const Eigen::MatrixXd cx = spec.c.evaluate(x), cy = spec.c.evaluate(y);
  PairCovariance out;
  out.a_matrix = cx * cy.transpose();
  out.d_matrix = ex * ey.transpose() + out.a_matrix;
  return out;
}

double generator(const ValidatedModel& model, const TestFunction& f, const Eigen::Ref<const Eigen::MatrixXd>& points) {
  const int n = static_cast<int>(points.cols());
  if (f.level() != n) throw Error(ErrorCode::DimensionMismatch, "generator: level mismatch");
  const auto& spec = model.spec();
  double total = 0.0;
  for (int p = 0; p < n; ++p) {
    const auto xp = points.col(p);
    total += spec.b.evaluate(xp).col(0).dot(f.slot_gradient(points, p));
    const auto pc = pair_covariance(model, xp, xp);
    total += 0.5 * (pc.d_matrix.cwiseProduct(f.block_hessian(points, p, p))).sum();
    for (int q = 0; q < n; ++q) {
      if (q == p) continue;
      const auto cross = pair_covariance(model, xp, points.col(q));
      total += 0.5 * (cross.a_matrix.cwiseProduct(f.block_hessian(points, p, q))).sum();
    }
  }
  return total;
}

void advance(DiffusionState& state, const ValidatedModel& model, double duration, double dt_max,
             MotionScheme scheme, RandomStream& rng, EulerWorkspace& ws) {
  if (duration <= 0.0) return;
  if (scheme == MotionScheme::Exact) {
    state = GaussianTransition(model, duration).sample(state, rng);
  } else {
    euler_advance(state, model, duration, dt_max, rng, ws);
  }
}

}  // namespace flowsuper
