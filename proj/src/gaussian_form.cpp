#include "flowsuper/gaussian_form.hpp"

#include <cmath>
#include <map>

#include "flowsuper/errors.hpp"

namespace flowsuper {
namespace {

using cd = std::complex<double>;

bool is_real(const ExpQuadTerm& t) { return t.weight.imag() == 0.0 && t.linear.imag().isZero(0.0); }

ExpQuadTerm multiply(const ExpQuadTerm& a, const ExpQuadTerm& b) {
  return ExpQuadTerm{a.weight * b.weight, a.quad + b.quad, a.linear + b.linear};
}

ExpQuadTerm conjugate(const ExpQuadTerm& a) { return ExpQuadTerm{std::conj(a.weight), a.quad, a.linear.conjugate()}; }

ExpQuadTerm slot_term(const SlotFunction& s, int d) {
  ExpQuadTerm t{cd(1.0, 0.0), Eigen::MatrixXd::Zero(d, d), Eigen::VectorXcd::Zero(d)};
  switch (s.kind) {
    case SlotKind::One: break;
    case SlotKind::Cosine:
      t.weight = std::polar(1.0, s.phi);
      t.linear = cd(0.0, 1.0) * s.theta.cast<cd>();
      break;
    case SlotKind::GaussianBump:
      t.weight = cd(std::exp(-s.lambda * s.center.squaredNorm()), 0.0);
      t.quad = 2.0 * s.lambda * Eigen::MatrixXd::Identity(d, d);
      t.linear = (2.0 * s.lambda * s.center).cast<cd>();
      break;
  }
  return t;
}

ExpQuadTerm embed(const ExpQuadTerm& t, int offset, int total) {
  const auto k = t.quad.rows();
  ExpQuadTerm out{t.weight, Eigen::MatrixXd::Zero(total, total), Eigen::VectorXcd::Zero(total)};
  out.quad.block(offset, offset, k, k) = t.quad;
  out.linear.segment(offset, k) = t.linear;
  return out;
}

}  // namespace

Eigen::MatrixXd coalesce_map(int level_after, int p, int q, int d) {
  const int l = level_after - 1;
  if (l < 1 || p == q || p < 1 || q < 1 || p > level_after || q > level_after)
    throw Error(ErrorCode::DimensionMismatch, "invalid coalescence indices");
  Eigen::MatrixXd map = Eigen::MatrixXd::Zero(level_after * d, l * d);
  int next = 0;
  for (int pos = 1; pos <= level_after; ++pos) {
    const int src = (pos == p || pos == q) ? l - 1 : next++;
    map.block((pos - 1) * d, src * d, d, d).setIdentity();
  }
  return map;
}

ClosedFormFunction ClosedFormFunction::constant(int level, int d, double value) {
  ClosedFormFunction f(level, d);
  const int k = level * d;
  f.push(ExpQuadTerm{cd(value, 0.0), Eigen::MatrixXd::Zero(k, k), Eigen::VectorXcd::Zero(k)});
  return f;
}

ClosedFormFunction ClosedFormFunction::from_test_function(const TestFunction& h) {
  const int d = h.dim();
  ClosedFormFunction out = constant(0, d, 1.0);
  for (const auto& s : h.slots()) {
    ClosedFormFunction slot(1, d);
    slot.push(slot_term(s, d));
    out = out.tensor(slot);
  }
  return out;
}

void ClosedFormFunction::push(ExpQuadTerm term) {
  if (term.weight != cd(0.0, 0.0)) terms_.push_back(std::move(term));
}

double ClosedFormFunction::operator()(const Eigen::Ref<const Eigen::MatrixXd>& points) const {
  if (points.cols() != level_ || points.rows() != d_) throw Error(ErrorCode::DimensionMismatch, "closed form: bad point shape");
  const Eigen::Map<const Eigen::VectorXd> x(points.data(), points.size());
  double s = 0.0;
  for (const auto& t : terms_) {
    const cd expo = -0.5 * x.dot(t.quad * x) + cd((t.linear.transpose() * x.cast<cd>()).value());
    s += (t.weight * std::exp(expo)).real();
  }
  return s;
}

ClosedFormFunction ClosedFormFunction::scaled(double factor) const {
  ClosedFormFunction out(level_, d_);
  for (auto t : terms_) {
    t.weight *= factor;
    out.push(std::move(t));
  }
  return out;
}

ClosedFormFunction& ClosedFormFunction::operator+=(const ClosedFormFunction& other) {
  if (other.level_ != level_ || other.d_ != d_) throw Error(ErrorCode::DimensionMismatch, "closed form: sum shape");
  for (const auto& t : other.terms_) push(t);
  return *this;
}

ClosedFormFunction ClosedFormFunction::operator*(const ClosedFormFunction& other) const {
  if (other.level_ != level_ || other.d_ != d_) throw Error(ErrorCode::DimensionMismatch, "closed form: product shape");
  ClosedFormFunction out(level_, d_);
  for (const auto& a : terms_) {
    for (const auto& b : other.terms_) {
      if (is_real(a) || is_real(b)) {
        out.push(multiply(a, b));
      } else {
        // Re(A) Re(B) = Re(A B)/2 + Re(A conj(B))/2
        auto ab = multiply(a, b);
        ab.weight *= 0.5;
        auto abc = multiply(a, conjugate(b));
        abc.weight *= 0.5;
        out.push(std::move(ab));
        out.push(std::move(abc));
      }
    }
  }
  return out;
}

ClosedFormFunction ClosedFormFunction::tensor(const ClosedFormFunction& other) const {
  if (other.d_ != d_) throw Error(ErrorCode::DimensionMismatch, "closed form: tensor dimension");
  const int total = (level_ + other.level_) * d_;
  ClosedFormFunction left(level_ + other.level_, d_), right(level_ + other.level_, d_);
  for (const auto& t : terms_) left.push(embed(t, 0, total));
  for (const auto& t : other.terms_) right.push(embed(t, level_ * d_, total));
  return left * right;
}

ClosedFormFunction ClosedFormFunction::substitute(const Eigen::MatrixXd& map, int new_level) const {
  if (map.rows() != level_ * d_ || map.cols() != new_level * d_)
    throw Error(ErrorCode::DimensionMismatch, "closed form: substitution shape");
  ClosedFormFunction out(new_level, d_);
  for (const auto& t : terms_) {
    Eigen::MatrixXd q = map.transpose() * t.quad * map;
    out.push(ExpQuadTerm{t.weight, 0.5 * (q + q.transpose()), map.transpose().cast<cd>() * t.linear});
  }
  return out;
}

ClosedFormFunction ClosedFormFunction::transported(const GaussianTransition& tr) const {
  const int n = level_;
  const int k = n * d_;
  if (tr.duration() == 0.0) return *this;
  Eigen::MatrixXd flow = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd shift(k);
  for (int p = 0; p < n; ++p) {
    flow.block(p * d_, p * d_, d_, d_) = tr.flow();
    shift.segment(p * d_, d_) = tr.shift();
  }
  const Eigen::MatrixXd cov = tr.joint_covariance(n);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(k, k);

  ClosedFormFunction out(n, d_);
  for (const auto& t : terms_) {
    // E exp(-Z^T P Z / 2 + b^T Z), Z ~ N(mu, C), mu = flow x + shift, with
    // K = (I + C P)^{-1} C and r = b - P mu.
    const Eigen::MatrixXd icp = eye + cov * t.quad;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(icp);
    Eigen::MatrixXd kmat = lu.solve(cov);
    kmat = 0.5 * (kmat + kmat.transpose());
    const double logdet = std::log(std::abs(lu.determinant()));
    const Eigen::VectorXcd r0 = t.linear - (t.quad * shift).cast<cd>();
    const Eigen::MatrixXcd kc = kmat.cast<cd>();

    Eigen::MatrixXd q = flow.transpose() * (t.quad - t.quad * kmat * t.quad) * flow;
    q = 0.5 * (q + q.transpose());
    const Eigen::VectorXcd lin = flow.transpose().cast<cd>() * ((eye - t.quad * kmat).cast<cd>() * r0);
    const cd logc = -0.5 * shift.dot(t.quad * shift) + cd(t.linear.transpose() * shift.cast<cd>()) +
                    0.5 * cd(r0.transpose() * kc * r0) - 0.5 * logdet;
    out.push(ExpQuadTerm{t.weight * std::exp(logc), q, lin});
  }
  return out;
}

double ClosedFormFunction::integrate_product(const EmpiricalMeasure& mu) const {
  // Group identical atoms so repeated initial positions cost one evaluation.
  std::vector<Eigen::VectorXd> atoms;
  std::vector<double> weights;
  {
    std::map<std::vector<double>, std::size_t> index;
    for (int i = 0; i < mu.count(); ++i) {
      std::vector<double> key(mu.atoms.col(i).data(), mu.atoms.col(i).data() + mu.atoms.rows());
      auto [it, inserted] = index.emplace(key, atoms.size());
      if (inserted) {
        atoms.emplace_back(mu.atoms.col(i));
        weights.push_back(0.0);
      }
      weights[it->second] += mu.weight;
    }
  }
  if (level_ == 0) return (*this)(Eigen::MatrixXd(d_, 0));
  const std::size_t a = atoms.size();
  std::vector<std::size_t> tuple(static_cast<std::size_t>(level_), 0);
  Eigen::MatrixXd pts(d_, level_);
  double total = 0.0;
  for (;;) {
    double w = 1.0;
    for (int p = 0; p < level_; ++p) {
      pts.col(p) = atoms[tuple[static_cast<std::size_t>(p)]];
      w *= weights[tuple[static_cast<std::size_t>(p)]];
    }
    total += w * (*this)(pts);
    int p = 0;
    while (p < level_ && ++tuple[static_cast<std::size_t>(p)] == a) tuple[static_cast<std::size_t>(p++)] = 0;
    if (p == level_) break;
  }
  return total;
}

LevelFunction ClosedFormFunction::as_level_function() const {
  return LevelFunction{level_, [f = *this](const Eigen::Ref<const Eigen::MatrixXd>& pts) { return f(pts); }};
}

}  // namespace flowsuper
