#include "flowsuper/moments.hpp"

#include <boost/math/special_functions/legendre.hpp>

#include <cmath>
#include <string>

#include "flowsuper/errors.hpp"
#include "flowsuper/parallel.hpp"

namespace flowsuper {
namespace {

double potential(const ValidatedModel& model, const Eigen::MatrixXd& pts) {
  double v = 0.0;
  for (Eigen::Index p = 0; p < pts.cols(); ++p) v += model.gamma(pts.col(p));
  return v;
}

// Advances the state and returns the trapezoid integral of sum_p gamma(Y^p).
double fk_advance(DiffusionState& st, const ValidatedModel& model, double duration, const PathSettings& s,
                  RandomStream& rng, EulerWorkspace& ws) {
  if (duration <= 0.0) return 0.0;
  const bool flat = model.has_constant_branching();
  if (s.scheme == MotionScheme::Exact && flat) {
    st = GaussianTransition(model, duration).sample(st, rng);
    st.time += duration;
    return st.count() * model.gamma(Eigen::VectorXd::Zero(model.d())) * duration;
  }
  const int steps = std::max(1, static_cast<int>(std::ceil(duration / s.dt_max - 1e-9)));
  const double dt = duration / steps;
  std::optional<GaussianTransition> exact;
  if (s.scheme == MotionScheme::Exact) exact.emplace(model, dt);
  double acc = 0.0;
  double v0 = flat ? 0.0 : potential(model, st.points);
  for (int k = 0; k < steps; ++k) {
    if (exact) {
      const double t0 = st.time;
      st = exact->sample(st, rng);
      st.time = t0 + dt;
    } else {
      const auto noise = NoiseIncrement::draw(rng, st.count(), model.d(), model.m(), dt);
      em_step_inplace(st, model, noise, ws);
    }
    if (!flat) {
      const double v1 = potential(model, st.points);
      acc += 0.5 * dt * (v0 + v1);
      v0 = v1;
    }
  }
  if (flat) acc = st.count() * model.gamma(Eigen::VectorXd::Zero(model.d())) * duration;
  return acc;
}

std::pair<int, int> ordered_pair(std::uint64_t idx, int level) {
  const int p = static_cast<int>(idx / static_cast<std::uint64_t>(level - 1)) + 1;
  int q = static_cast<int>(idx % static_cast<std::uint64_t>(level - 1)) + 1;
  if (q >= p) ++q;
  return {p, q};
}

int distinct_atoms(const EmpiricalMeasure& nu) {
  for (int i = 1; i < nu.count(); ++i)
    if (nu.atoms.col(i) != nu.atoms.col(0)) return 2;
  return nu.count() == 0 ? 0 : 1;
}

// One sample of the integrand of a recursion term: start at level `start`
// from nu^start, run through the segments, coalescing upward between them.
double recursion_path(const LevelFunction& h, const EmpiricalMeasure& nu, int start,
                      const std::vector<double>& durations, const ValidatedModel& model, const PathSettings& s,
                      RandomStream& rng) {
  EulerWorkspace ws;
  const bool single = distinct_atoms(nu) == 1;
  DiffusionState st{Eigen::MatrixXd(model.d(), start), 0.0};
  for (int p = 0; p < start; ++p)
    st.points.col(p) = nu.atoms.col(single ? 0 : static_cast<Eigen::Index>(rng.below(nu.count())));
  double weight = std::pow(nu.total_mass(), start);
  double logw = 0.0;
  for (std::size_t j = 0; j < durations.size(); ++j) {
    if (j > 0) {
      const int next = st.count() + 1;
      const auto [p, q] = ordered_pair(rng.below(static_cast<std::uint64_t>(next) * (next - 1)), next);
      const double sg = model.sigma(st.points.col(st.count() - 1));
      weight *= 0.5 * next * (next - 1) * sg * sg;
      st.points = coalesce_points(st.points, p, q);
    }
    logw += fk_advance(st, model, durations[j], s, rng, ws);
  }
  return weight * std::exp(logw) * h(st.points);
}

MomentEstimate path_mean(const PathSettings& s, const StreamSource& source,
                         const std::function<double(RandomStream&)>& sample) {
  std::vector<double> values(s.paths);
  parallel_for(s.paths, [&](std::size_t r) {
    auto rng = source.stream(r);
    values[r] = sample(rng);
  });
  return sample_estimate(values, Provenance::FormulaMc);
}

void require_closed(const ValidatedModel& model) {
  if (!model.is_affine() || !model.has_constant_branching())
    throw Error(ErrorCode::NotClosedForm, "closed form needs affine motion and constant gamma, sigma");
}

double constant_gamma(const ValidatedModel& model) { return model.gamma(Eigen::VectorXd::Zero(model.d())); }
double constant_sigma(const ValidatedModel& model) { return model.sigma(Eigen::VectorXd::Zero(model.d())); }

ClosedFormFunction transport(const ClosedFormFunction& f, double t, const ValidatedModel& model) {
  if (t <= 0.0) return f;
  return f.transported(GaussianTransition(model, t));
}

}  // namespace

QuadratureRule gauss_legendre(int n) {
  if (n < 1) throw Error(ErrorCode::ValidationError, "quadrature needs at least one node");
  const auto zeros = boost::math::legendre_p_zeros<double>(n);  // nonnegative half
  QuadratureRule rule;
  for (double x : zeros) {
    const double dp = boost::math::legendre_p_prime(n, x);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes.push_back(0.5 * (1.0 + x));
    rule.weights.push_back(0.5 * w);
    if (x != 0.0) {
      rule.nodes.push_back(0.5 * (1.0 - x));
      rule.weights.push_back(0.5 * w);
    }
  }
  return rule;
}

Eigen::MatrixXd coalesce_points(const Eigen::Ref<const Eigen::MatrixXd>& y, int p, int q) {
  const auto l = static_cast<int>(y.cols());
  if (l < 1 || p == q || p < 1 || q < 1 || p > l + 1 || q > l + 1)
    throw Error(ErrorCode::DimensionMismatch, "invalid coalescence indices");
  Eigen::MatrixXd out(y.rows(), l + 1);
  int next = 0;
  for (int pos = 1; pos <= l + 1; ++pos) out.col(pos - 1) = (pos == p || pos == q) ? y.col(l - 1) : y.col(next++);
  return out;
}

FeynmanKacEstimate feynman_kac(const LevelFunction& h, const Eigen::Ref<const Eigen::MatrixXd>& y, double t,
                           const ValidatedModel& model, const PathSettings& settings, const StreamSource& source) {
  if (y.cols() != h.level || y.rows() != model.d()) throw Error(ErrorCode::DimensionMismatch, "feynman_kac: point shape");
  if (t < 0.0) throw Error(ErrorCode::BadTimeOrder, "feynman_kac: negative time");
  const Eigen::MatrixXd start = y;
  const auto est = path_mean(settings, source, [&](RandomStream& rng) {
    EulerWorkspace ws;
    DiffusionState st{start, 0.0};
    const double logw = fk_advance(st, model, t, settings, rng, ws);
    return std::exp(logw) * h(st.points);
  });
  return FeynmanKacEstimate{est.value, est.std_error, h.level, t, settings.paths};
}

LevelFunction coalesce_sum(const LevelFunction& h, const ValidatedModel& model) {
  if (h.level < 2) throw Error(ErrorCode::LevelTooLow, "coalescence needs level >= 2");
  const int n = h.level;
  return LevelFunction{n - 1, [h, model, n](const Eigen::Ref<const Eigen::MatrixXd>& x) {
                         const double sg = model.sigma(x.col(n - 2));
                         double sum = 0.0;
                         for (int p = 1; p <= n; ++p)
                           for (int q = 1; q <= n; ++q)
                             if (p != q) sum += h(coalesce_points(x, p, q));
                         return 0.5 * sg * sg * sum;
                       }};
}

ClosedFormFunction coalesce_sum(const ClosedFormFunction& h, double sigma) {
  const int n = h.level();
  if (n < 2) throw Error(ErrorCode::LevelTooLow, "coalescence needs level >= 2");
  ClosedFormFunction out(n - 1, h.dim());
  for (int p = 1; p <= n; ++p)
    for (int q = 1; q <= n; ++q)
      if (p != q) out += h.substitute(coalesce_map(n, p, q, h.dim()), n - 1);
  return out.scaled(0.5 * sigma * sigma);
}

ClosedFormFunction feynman_kac_closed(const ClosedFormFunction& h, double t, const ValidatedModel& model) {
  require_closed(model);
  return transport(h, t, model).scaled(std::exp(h.level() * constant_gamma(model) * t));
}

MomentEstimate moment_formula(const TestFunction& h, const EmpiricalMeasure& nu, double t,
                              const ValidatedModel& model, const FormulaSettings& settings,
                              const StreamSource& source) {
  const int n = h.level();
  if (n < 1 || n > 3) throw Error(ErrorCode::UnsupportedOrder, "moment formula supports n in 1..3");
  if (h.dim() != model.d()) throw Error(ErrorCode::DimensionMismatch, "moment formula: test function dimension");
  if (nu.count() == 0) throw Error(ErrorCode::EmptyInitial, "moment formula: empty initial measure");
  if (t < 0.0) throw Error(ErrorCode::BadTimeOrder, "moment formula: negative time");
  const auto outer = gauss_legendre(settings.outer_nodes);
  const auto inner = gauss_legendre(settings.inner_nodes);

  if (settings.backend == FormulaBackend::Closed) {
    require_closed(model);
    const double sg = constant_sigma(model);
    const auto base = ClosedFormFunction::from_test_function(h);
    double value = feynman_kac_closed(base, t, model).integrate_product(nu);
    if (n >= 2) {
      const auto& rule = n == 2 ? outer : inner;
      for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
        const double t1 = t * rule.nodes[k];
        const auto top = coalesce_sum(feynman_kac_closed(base, t - t1, model), sg);
        value += t * rule.weights[k] * feynman_kac_closed(top, t1, model).integrate_product(nu);
        if (n == 3) {
          for (std::size_t l = 0; l < inner.nodes.size(); ++l) {
            const double t2 = t1 * inner.nodes[l];
            const auto mid = coalesce_sum(feynman_kac_closed(top, t1 - t2, model), sg);
            value += t * rule.weights[k] * t1 * inner.weights[l] *
                     feynman_kac_closed(mid, t2, model).integrate_product(nu);
          }
        }
      }
    }
    return MomentEstimate{value, 0.0, Provenance::FormulaClosed, 0};
  }

  const auto hf = as_level_function(h);
  const auto& ps = settings.paths;
  auto term0 = path_mean(ps, source.child("term0"),
                         [&](RandomStream& rng) { return recursion_path(hf, nu, n, {t}, model, ps, rng); });
  double value = term0.value;
  double var = term0.std_error * term0.std_error;
  if (n >= 2) {
    const auto& rule = n == 2 ? outer : inner;
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
      const double t1 = t * rule.nodes[k];
      const double w1 = t * rule.weights[k];
      const auto est = path_mean(ps, source.child("term1/node" + std::to_string(k)), [&](RandomStream& rng) {
        return recursion_path(hf, nu, n - 1, {t1, t - t1}, model, ps, rng);
      });
      value += w1 * est.value;
      var += w1 * w1 * est.std_error * est.std_error;
      if (n == 3) {
        for (std::size_t l = 0; l < inner.nodes.size(); ++l) {
          const double t2 = t1 * inner.nodes[l];
          const double w2 = w1 * t1 * inner.weights[l];
          const auto est2 = path_mean(
              ps, source.child("term2/node" + std::to_string(k) + "_" + std::to_string(l)),
              [&](RandomStream& rng) { return recursion_path(hf, nu, 1, {t2, t1 - t2, t - t1}, model, ps, rng); });
          value += w2 * est2.value;
          var += w2 * w2 * est2.std_error * est2.std_error;
        }
      }
    }
  }
  return MomentEstimate{value, std::sqrt(var), Provenance::FormulaMc, ps.paths};
}

MomentEstimate closed_form_first_moment(const TestFunction& h, const EmpiricalMeasure& nu, double t,
                                        const ValidatedModel& model) {
  require_closed(model);
  if (h.level() != 1) throw Error(ErrorCode::DimensionMismatch, "first moment needs a level-1 test function");
  if (t < 0.0) throw Error(ErrorCode::BadTimeOrder, "first moment: negative time");
  const auto f = ClosedFormFunction::from_test_function(h);
  const double v = std::exp(constant_gamma(model) * t) * transport(f, t, model).integrate_product(nu);
  return MomentEstimate{v, 0.0, Provenance::FormulaClosed, 0};
}

ClosedFormResult closed_form_second_moment(const TestFunction& h1, const TestFunction& h2, double s, double t,
                                           const EmpiricalMeasure& nu, const ValidatedModel& model, int nodes) {
  require_closed(model);
  if (h1.level() != 1 || h2.level() != 1)
    throw Error(ErrorCode::DimensionMismatch, "second moment needs level-1 test functions");
  if (s < 0.0 || s > t) throw Error(ErrorCode::BadTimeOrder, "second moment needs 0 <= s <= t");
  const double g = constant_gamma(model);
  const double sg = constant_sigma(model);
  const int d = model.d();
  const auto f1 = ClosedFormFunction::from_test_function(h1);
  const auto f2 = ClosedFormFunction::from_test_function(h2);
  const auto joint = f1.tensor(transport(f2, t - s, model));
  Eigen::MatrixXd diag(2 * d, d);
  diag << Eigen::MatrixXd::Identity(d, d), Eigen::MatrixXd::Identity(d, d);

  const double scale = std::exp(g * (s + t));
  const double first = scale * transport(joint, s, model).integrate_product(nu);
  auto integral = [&](int k) {
    const auto rule = gauss_legendre(k);
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      const double u = s * rule.nodes[i];
      const auto inner = transport(joint, s - u, model).substitute(diag, 1);
      acc += s * rule.weights[i] * std::exp(-g * u) * transport(inner, u, model).integrate_product(nu);
    }
    return sg * sg * scale * acc;
  };
  const double full = integral(nodes);
  const double half = integral(std::max(1, nodes / 2));
  return ClosedFormResult{MomentEstimate{first + full, 0.0, Provenance::FormulaClosed, 0}, std::abs(full - half)};
}

double laplace_exponent(double rho, double t, double gamma, double sigma) {
  const double s2 = sigma * sigma;
  if (std::abs(gamma) < 1e-8) return rho / (1.0 + 0.5 * s2 * rho * t);
  const double growth = std::exp(gamma * t);
  return rho * growth / (1.0 + s2 * rho * std::expm1(gamma * t) / (2.0 * gamma));
}

double mass_laplace(double rho, double t, double gamma, double sigma, double initial_mass) {
  if (t < 0.0) throw Error(ErrorCode::BadTimeOrder, "mass_laplace: negative time");
  return std::exp(-initial_mass * laplace_exponent(rho, t, gamma, sigma));
}

std::vector<ExpansionTerm> fk_expansion_check(const LevelFunction& h, const Eigen::Ref<const Eigen::MatrixXd>& y,
                                              double t, const ValidatedModel& model, int max_order,
                                              const PathSettings& settings, const StreamSource& source,
                                              int nodes) {
  if (max_order < 1 || max_order > 2) throw Error(ErrorCode::UnsupportedOrder, "expansion check supports orders 1..2");
  if (y.cols() != h.level || y.rows() != model.d()) throw Error(ErrorCode::DimensionMismatch, "expansion: point shape");
  const Eigen::MatrixXd start = y;
  const auto rule = gauss_legendre(nodes);

  // Segment-wise advance; the potential integral is discarded.
  auto run = [&](RandomStream& rng, const std::vector<double>& durations, std::vector<double>& v_at_ends) {
    EulerWorkspace ws;
    DiffusionState st{start, 0.0};
    for (std::size_t j = 0; j < durations.size(); ++j) {
      fk_advance(st, model, durations[j], settings, rng, ws);
      if (j + 1 < durations.size()) v_at_ends.push_back(potential(model, st.points));
    }
    return h(st.points);
  };

  // power form: one path set serves every order
  std::vector<std::vector<double>> power(static_cast<std::size_t>(max_order), std::vector<double>(settings.paths));
  const auto psrc = source.child("power");
  parallel_for(settings.paths, [&](std::size_t r) {
    auto rng = psrc.stream(r);
    EulerWorkspace ws;
    DiffusionState st{start, 0.0};
    const double integral = fk_advance(st, model, t, settings, rng, ws);
    const double hv = h(st.points);
    double term = 1.0;
    for (int i = 1; i <= max_order; ++i) {
      term *= integral / i;
      power[static_cast<std::size_t>(i - 1)][r] = term * hv;
    }
  });

  std::vector<ExpansionTerm> out;
  for (int i = 1; i <= max_order; ++i) {
    ExpansionTerm term;
    term.order = i;
    term.power = sample_estimate(power[static_cast<std::size_t>(i - 1)], Provenance::FormulaMc);
    double value = 0.0, var = 0.0;
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
      const double t1 = t * rule.nodes[k];
      const double w1 = t * rule.weights[k];
      if (i == 1) {
        const auto est = path_mean(settings, source.child("order1/node" + std::to_string(k)), [&](RandomStream& rng) {
          std::vector<double> v;
          const double hv = run(rng, {t1, t - t1}, v);
          return v[0] * hv;
        });
        value += w1 * est.value;
        var += w1 * w1 * est.std_error * est.std_error;
        continue;
      }
      for (std::size_t l = 0; l < rule.nodes.size(); ++l) {
        const double t2 = t1 * rule.nodes[l];
        const double w2 = w1 * t1 * rule.weights[l];
        const auto est = path_mean(
            settings, source.child("order2/node" + std::to_string(k) + "_" + std::to_string(l)),
            [&](RandomStream& rng) {
              std::vector<double> v;
              const double hv = run(rng, {t2, t1 - t2, t - t1}, v);
              return v[0] * v[1] * hv;
            });
        value += w2 * est.value;
        var += w2 * w2 * est.std_error * est.std_error;
      }
    }
    term.iterated = MomentEstimate{value, std::sqrt(var), Provenance::FormulaMc, settings.paths};
    term.relative_error = std::abs(value - term.power.value) / std::max(std::abs(term.power.value), 1e-12);
    out.push_back(term);
  }
  return out;
}

}  // namespace flowsuper
