#include "flowsuper/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "flowsuper/errors.hpp"

namespace flowsuper {
namespace {

constexpr double kProbTol = 1e-14;

double standard_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

std::string shape_str(int r, int c) {
  std::ostringstream os;
  os << r << "x" << c;
  return os.str();
}

void require_entries(int rows, int cols, const std::vector<EntryFunction>& entries) {
  if (rows <= 0 || cols <= 0) throw Error(ErrorCode::ShapeMismatch, "field shape must be positive");
  if (static_cast<int>(entries.size()) != rows * cols) {
    throw Error(ErrorCode::ShapeMismatch, "field declared " + shape_str(rows, cols) + " but has " +
                                              std::to_string(entries.size()) + " entries");
  }
  const auto dim = entries.front().omega.size();
  for (const auto& e : entries) {
    if (e.omega.size() != dim) throw Error(ErrorCode::ShapeMismatch, "entries disagree on input dimension");
    if (e.profile == Profile::NormalCdf && !(e.width > 0.0))
      throw Error(ErrorCode::ValidationError, "normal-cdf entry needs a positive width");
  }
}

}  // namespace

double EntryFunction::operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const double arg = omega.dot(x) + phase;
  double p = 0.0;
  switch (profile) {
    case Profile::Sine: p = std::sin(arg); break;
    case Profile::Tanh: p = std::tanh(arg); break;
    case Profile::NormalCdf: p = standard_normal_cdf(arg / width); break;
    case Profile::Indicator: p = arg > 0.0 ? 1.0 : 0.0; break;
  }
  return amplitude * p + offset;
}

double EntryFunction::sup_norm() const {
  const bool flat = omega.size() == 0 || omega.norm() == 0.0;
  if (flat) return std::abs((*this)(Eigen::VectorXd::Zero(omega.size())));
  switch (profile) {
    case Profile::Sine:
    case Profile::Tanh: return std::abs(amplitude) + std::abs(offset);
    case Profile::NormalCdf:
    case Profile::Indicator: return std::max(std::abs(offset), std::abs(amplitude + offset));
  }
  return std::numeric_limits<double>::infinity();
}

double EntryFunction::lipschitz() const {
  const double w = omega.size() == 0 ? 0.0 : omega.norm();
  switch (profile) {
    case Profile::Sine:
    case Profile::Tanh: return std::abs(amplitude) * w;
    case Profile::NormalCdf: return std::abs(amplitude) * w / (width * std::sqrt(2.0 * std::numbers::pi));
    case Profile::Indicator: return w == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return std::numeric_limits<double>::infinity();
}

CoefficientField CoefficientField::constant(Eigen::MatrixXd value) {
  CoefficientField f;
  f.kind_ = FieldKind::Constant;
  f.rows_ = static_cast<int>(value.rows());
  f.cols_ = static_cast<int>(value.cols());
  f.constant_ = std::move(value);
  f.declared_lipschitz = 0.0;
  f.declared_bound = f.constant_.size() == 0 ? 0.0 : f.constant_.cwiseAbs().maxCoeff();
  return f;
}

CoefficientField CoefficientField::affine(Eigen::MatrixXd a, Eigen::VectorXd v) {
  if (a.rows() != v.size()) throw Error(ErrorCode::ShapeMismatch, "affine A rows must match v length");
  CoefficientField f;
  f.kind_ = FieldKind::Affine;
  f.rows_ = static_cast<int>(a.rows());
  f.cols_ = 1;
  f.a_ = std::move(a);
  f.v_ = std::move(v);
  f.declared_lipschitz = f.a_.norm();
  if (f.a_.isZero(0.0)) {
    f.declared_bound = f.v_.size() == 0 ? 0.0 : f.v_.cwiseAbs().maxCoeff();
  } else {
    f.declared_bound.reset();
  }
  return f;
}

CoefficientField CoefficientField::bounded_smooth(int rows, int cols, std::vector<EntryFunction> entries) {
  require_entries(rows, cols, entries);
  for (const auto& e : entries) {
    if (e.profile == Profile::Indicator)
      throw Error(ErrorCode::ValidationError, "indicator entries belong to a step field");
  }
  CoefficientField f;
  f.kind_ = FieldKind::BoundedSmooth;
  f.rows_ = rows;
  f.cols_ = cols;
  f.entries_ = std::move(entries);
  f.declared_lipschitz = f.analytic_lipschitz().value_or(0.0);
  f.declared_bound = f.analytic_bound();
  return f;
}

CoefficientField CoefficientField::step(int rows, int cols, std::vector<EntryFunction> entries) {
  require_entries(rows, cols, entries);
  CoefficientField f;
  f.kind_ = FieldKind::Step;
  f.rows_ = rows;
  f.cols_ = cols;
  f.entries_ = std::move(entries);
  f.declared_lipschitz = std::numeric_limits<double>::infinity();
  f.declared_bound = f.analytic_bound();
  return f;
}

int CoefficientField::input_dim() const noexcept {
  switch (kind_) {
    case FieldKind::Constant: return 0;
    case FieldKind::Affine: return static_cast<int>(a_.cols());
    case FieldKind::BoundedSmooth:
    case FieldKind::Step: return entries_.empty() ? 0 : static_cast<int>(entries_.front().omega.size());
  }
  return 0;
}

void CoefficientField::evaluate_into(const Eigen::Ref<const Eigen::VectorXd>& x,
                                     Eigen::Ref<Eigen::MatrixXd> out) const {
  switch (kind_) {
    case FieldKind::Constant: out = constant_; return;
    case FieldKind::Affine: out.col(0).noalias() = a_ * x + v_; return;
    case FieldKind::BoundedSmooth:
    case FieldKind::Step:
      for (int r = 0; r < rows_; ++r)
        for (int c = 0; c < cols_; ++c) out(r, c) = entries_[static_cast<std::size_t>(r * cols_ + c)](x);
      return;
  }
}

Eigen::MatrixXd CoefficientField::evaluate(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::MatrixXd out(rows_, cols_);
  evaluate_into(x, out);
  return out;
}

double CoefficientField::scalar_at(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  switch (kind_) {
    case FieldKind::Constant: return constant_(0, 0);
    case FieldKind::Affine: return a_.row(0).dot(x) + v_(0);
    case FieldKind::BoundedSmooth:
    case FieldKind::Step: return entries_.front()(x);
  }
  return 0.0;
}

std::optional<double> CoefficientField::analytic_bound() const {
  switch (kind_) {
    case FieldKind::Constant: return constant_.size() == 0 ? 0.0 : constant_.cwiseAbs().maxCoeff();
    case FieldKind::Affine:
      if (!a_.isZero(0.0)) return std::nullopt;
      return v_.size() == 0 ? 0.0 : v_.cwiseAbs().maxCoeff();
    case FieldKind::BoundedSmooth:
    case FieldKind::Step: {
      double s = 0.0;
      for (const auto& e : entries_) s = std::max(s, e.sup_norm());
      return s;
    }
  }
  return std::nullopt;
}

std::optional<double> CoefficientField::analytic_lipschitz() const {
  switch (kind_) {
    case FieldKind::Constant: return 0.0;
    case FieldKind::Affine: return a_.norm();
    case FieldKind::BoundedSmooth: {
      double s = 0.0;
      for (const auto& e : entries_) s += e.lipschitz() * e.lipschitz();
      return std::sqrt(s);
    }
    case FieldKind::Step: return std::nullopt;
  }
  return std::nullopt;
}

bool ValidatedModel::is_affine() const noexcept {
  const auto& s = spec_;
  const bool b_ok = s.b.kind() == FieldKind::Affine || s.b.kind() == FieldKind::Constant;
  return b_ok && s.e.is_constant() && s.c.is_constant();
}

std::vector<Eigen::VectorXd> probe_grid(int d) {
  int per_axis = 3;
  while (std::pow(per_axis + 1, d) <= 4096.0 && per_axis < 201) ++per_axis;
  std::vector<Eigen::VectorXd> pts;
  const std::size_t total = static_cast<std::size_t>(std::pow(per_axis, d));
  pts.reserve(total + 4);
  for (std::size_t idx = 0; idx < total; ++idx) {
    Eigen::VectorXd x(d);
    std::size_t rem = idx;
    for (int k = 0; k < d; ++k) {
      x(k) = -5.0 + 10.0 * static_cast<double>(rem % per_axis) / (per_axis - 1);
      rem /= per_axis;
    }
    pts.push_back(std::move(x));
  }
  for (double far : {-1e3, -50.0, 50.0, 1e3}) pts.push_back(Eigen::VectorXd::Constant(d, far));
  return pts;
}

namespace {

void check_shape(const char* name, const CoefficientField& f, int rows, int cols, int d) {
  if (f.rows() != rows || f.cols() != cols) {
    throw Error(ErrorCode::ShapeMismatch, std::string(name) + " must be " + shape_str(rows, cols) + ", got " +
                                              shape_str(f.rows(), f.cols()));
  }
  const int in = f.input_dim();
  if (in != 0 && in != d) {
    throw Error(ErrorCode::ShapeMismatch,
                std::string(name) + " takes inputs of dimension " + std::to_string(in) + ", expected " + std::to_string(d));
  }
  if (f.kind() == FieldKind::Affine && cols != 1)
    throw Error(ErrorCode::ShapeMismatch, std::string(name) + " cannot be affine (matrix-valued)");
}

void check_declared_bound(const char* name, const CoefficientField& f, const std::vector<Eigen::VectorXd>& grid) {
  if (!f.declared_bound) return;
  Eigen::MatrixXd out(f.rows(), f.cols());
  for (const auto& x : grid) {
    f.evaluate_into(x, out);
    if (out.cwiseAbs().maxCoeff() > *f.declared_bound + 1e-12)
      throw Error(ErrorCode::BoundViolation, std::string(name) + " exceeds its declared bound on the probe grid");
  }
}

}  // namespace

ValidatedModel validate_model(ModelSpec spec) {
  if (spec.d < 1 || spec.m < 1) throw Error(ErrorCode::ShapeMismatch, "d and m must be positive");
  check_shape("b", spec.b, spec.d, 1, spec.d);
  check_shape("e", spec.e, spec.d, spec.d, spec.d);
  check_shape("c", spec.c, spec.d, spec.m, spec.d);
  check_shape("gamma", spec.gamma, 1, 1, spec.d);
  check_shape("sigma", spec.sigma, 1, 1, spec.d);

  const auto grid = probe_grid(spec.d);
  for (const auto& x : grid) {
    if (spec.sigma.scalar_at(x) < 0.0)
      throw Error(ErrorCode::NegativeSigma, "sigma must be nonnegative everywhere");
  }

  auto bounded_by = [&](const char* name, const CoefficientField& f, double bound) {
    auto sup = f.analytic_bound();
    if (!sup) throw Error(ErrorCode::BoundViolation, std::string(name) + " must be bounded");
    for (const auto& x : grid) {
      if (std::abs(f.scalar_at(x)) > bound + 1e-12)
        throw Error(ErrorCode::BoundViolation, std::string(name) + " exceeds its declared bound " + std::to_string(bound));
    }
    if (*sup > bound + 1e-12)
      throw Error(ErrorCode::BoundViolation, std::string(name) + " sup-norm " + std::to_string(*sup) +
                                                 " exceeds declared bound " + std::to_string(bound));
  };
  bounded_by("gamma", spec.gamma, spec.gamma_bound);
  bounded_by("sigma", spec.sigma, spec.sigma_bound);

  check_declared_bound("b", spec.b, grid);
  check_declared_bound("e", spec.e, grid);
  check_declared_bound("c", spec.c, grid);
  return ValidatedModel(std::move(spec));
}

double OffspringLaw::moment(int p) const {
  double s = 0.0;
  for (std::size_t i = 0; i < support.size(); ++i) s += std::pow(static_cast<double>(support[i]), p) * probs[i];
  return s;
}

double OffspringLaw::mean() const { return moment(1); }

double OffspringLaw::variance() const {
  const double mu = mean();
  double s = 0.0;
  for (std::size_t i = 0; i < support.size(); ++i) {
    const double dev = support[i] - mu;
    s += dev * dev * probs[i];
  }
  return s;
}

double lattice_min_variance(double mean) {
  const double frac = mean - std::floor(mean);
  return frac * (1.0 - frac);
}

OffspringLaw offspring_law(double mean, double variance) {
  if (!std::isfinite(mean) || !std::isfinite(variance) || mean < 0.0 || variance < 0.0)
    throw Error(ErrorCode::InfeasibleLaw, "mean and variance must be finite and nonnegative");
  OffspringLaw law;
  law.target_mean = mean;
  law.target_variance = variance;
  if (mean == 0.0) {
    if (variance != 0.0) throw Error(ErrorCode::InfeasibleLaw, "mean 0 forces variance 0");
    law.support = {0};
    law.probs = {1.0};
    return law;
  }

  // Second factorial moment E[N(N-1)]; zero means the law lives on {0, 1}.
  const double factorial2 = variance + mean * mean - mean;
  const double tol = 1e-14 * std::max(1.0, mean * mean + variance);
  if (std::abs(factorial2) <= tol) {
    if (mean > 1.0 + kProbTol) throw Error(ErrorCode::InfeasibleLaw, "no law on {0,1} has mean above 1");
    const double p1 = std::min(mean, 1.0);
    if (1.0 - p1 > 0.0) {
      law.support.push_back(0);
      law.probs.push_back(1.0 - p1);
    }
    law.support.push_back(1);
    law.probs.push_back(p1);
    return law;
  }
  if (factorial2 < 0.0) {
    throw Error(ErrorCode::InfeasibleLaw, "variance " + std::to_string(variance) +
                                              " below the lattice minimum for mean " + std::to_string(mean));
  }

  // p_1 >= 0 needs K >= 1 + A / mean, which can exceed ceil(var + mean^2) + 2
  // for small means with large variances.
  const int k_max = std::max(static_cast<int>(std::ceil(variance + mean * mean)) + 2,
                             static_cast<int>(std::ceil(1.0 + factorial2 / mean)));
  for (int k = 2; k <= k_max; ++k) {
    const double pk = factorial2 / (static_cast<double>(k) * (k - 1));
    double p1 = mean - k * pk;
    double p0 = 1.0 - p1 - pk;
    auto in_unit = [](double p) { return p >= -kProbTol && p <= 1.0 + kProbTol; };
    if (in_unit(pk) && in_unit(p1) && in_unit(p0)) {
      p1 = std::clamp(p1, 0.0, 1.0);
      p0 = std::clamp(p0, 0.0, 1.0);
      law.support = {0, 1, k};
      law.probs = {p0, p1, pk};
      return law;
    }
  }
  throw Error(ErrorCode::InfeasibleLaw, "no three-point law on {0,1,K} with K <= " + std::to_string(k_max) +
                                            " for mean " + std::to_string(mean) + ", variance " +
                                            std::to_string(variance));
}

int sample_offspring(const OffspringLaw& law, double u) {
  double cum = 0.0;
  for (std::size_t i = 0; i < law.support.size(); ++i) {
    cum += law.probs[i];
    if (u < cum) return law.support[i];
  }
  for (std::size_t i = law.support.size(); i-- > 0;) {
    if (law.probs[i] > 0.0) return law.support[i];
  }
  return law.support.back();
}

int sample_offspring(const OffspringLaw& law, RandomStream& rng) { return sample_offspring(law, rng.uniform()); }

CoefficientField mollify(const CoefficientField& field, double width) {
  if (!(width > 0.0)) throw Error(ErrorCode::ValidationError, "mollification width must be positive");
  switch (field.kind()) {
    case FieldKind::Constant: return field;
    case FieldKind::Affine: throw Error(ErrorCode::Unsupported, "affine fields are not mollified");
    case FieldKind::BoundedSmooth:
    case FieldKind::Step: break;
  }
  std::vector<EntryFunction> out = field.entries();
  for (auto& e : out) {
    const double w = e.omega.norm();
    switch (e.profile) {
      case Profile::Sine: e.amplitude *= std::exp(-0.5 * width * width * w * w); break;
      case Profile::Tanh: throw Error(ErrorCode::Unsupported, "no closed-form mollification of tanh entries");
      case Profile::NormalCdf: e.width = std::sqrt(e.width * e.width + width * width * w * w); break;
      case Profile::Indicator:
        if (w == 0.0) break;
        e.profile = Profile::NormalCdf;
        e.width = width * w;
        break;
    }
  }
  bool any_indicator = false;
  for (const auto& e : out) any_indicator |= e.profile == Profile::Indicator;
  if (any_indicator) return CoefficientField::step(field.rows(), field.cols(), std::move(out));
  return CoefficientField::bounded_smooth(field.rows(), field.cols(), std::move(out));
}

}  // namespace flowsuper
