#include "flowsuper/runner.hpp"

#include "flowsuper/dual.hpp"
#include "flowsuper/errors.hpp"
#include "flowsuper/moments.hpp"

namespace flowsuper {

namespace {

double default_time(const ScenarioConfig& c, const std::optional<double>& t) { return t ? *t : c.run.horizon; }

std::vector<std::string> observable_ids(const ScenarioConfig& c) {
  std::vector<std::string> ids;
  for (const auto& o : c.run.observables) ids.push_back(o.id);
  return ids;
}

std::vector<TestFunction> functions(const ScenarioConfig& c, const std::vector<std::string>& ids) {
  std::vector<TestFunction> out;
  for (const auto& id : ids) out.push_back(config_observable(c, id));
  return out;
}

std::string join_ids(const std::vector<std::string>& ids, const char* sep) {
  std::string s;
  for (const auto& id : ids) s += (s.empty() ? "" : sep) + id;
  return s;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
}

std::string at(double t) { return " t=" + format_double(t); }

}  // namespace

Scenario config_scenario(const ScenarioConfig& config) {
  Scenario sc{config_model(config), config.scale};
  sc.dt_max = config.run.dt_max;
  sc.replicates = config.run.replicates;
  sc.dual_paths = config.dual.paths;
  sc.formula_paths = config.verify.formula_paths;
  sc.outer_nodes = config.moments.outer_nodes;
  sc.inner_nodes = config.moments.inner_nodes;
  sc.scheme = config.run.scheme;
  sc.population_cap = config.run.population_cap;
  sc.seed = config.seed;
  return sc;
}

std::vector<NamedEstimate> run_simulate(const ScenarioConfig& config, const std::filesystem::path& out_dir) {
  const Scenario sc = config_scenario(config);
  const auto ids = observable_ids(config);
  RunSpec run;
  run.horizon = config.run.horizon;
  run.dt_max = config.run.dt_max;
  run.snap_times = config.run.snap_times.empty() ? std::vector<double>{config.run.horizon} : config.run.snap_times;
  run.observables = functions(config, ids);
  StepOptions opts;
  opts.scheme = sc.scheme;
  opts.population_cap = sc.population_cap;
  const ScaleSpec scale = initial_scale(sc);
  const auto runs = simulate_replicates(sc.model, scale, run, sc.replicates, sc.source("particle"), opts);

  std::vector<NamedEstimate> est;
  for (std::size_t s = 0; s < runs.front().times.size(); ++s) {
    const double t = runs.front().times[s];
    est.push_back({"X(mass)" + at(t), product_moment_estimate(runs, t, {kTotalMass})});
    for (std::size_t j = 0; j < ids.size(); ++j)
      est.push_back({"X(" + ids[j] + ")" + at(t), product_moment_estimate(runs, t, {static_cast<int>(j)})});
  }
  ensure_dir(out_dir);
  write_text_file(out_dir / "timeseries.csv", timeseries_csv(runs, ids));
  write_text_file(out_dir / "estimates.json", estimates_json(config.seed, config_hash(config), est));
  return est;
}

std::vector<NamedEstimate> run_dual(const ScenarioConfig& config, const std::filesystem::path& out_dir) {
  const Scenario sc = config_scenario(config);
  const std::vector<std::string> ids = config.dual.observables.empty()
                                           ? std::vector<std::string>(static_cast<std::size_t>(config.dual.n0), "mass")
                                           : config.dual.observables;
  const TestFunction h = TestFunction::tensor(functions(config, ids));
  const double t = default_time(config, config.dual.t);
  const MomentEstimate e = dual_moment_estimate(as_level_function(h), initial_measure(sc), t, sc.model,
                                                DualSettings{sc.dual_paths, sc.dt_max, sc.scheme}, sc.source("dual"));
  std::vector<NamedEstimate> est{{"E<" + join_ids(ids, "x") + ", X^" + std::to_string(config.dual.n0) + ">" + at(t), e}};
  ensure_dir(out_dir);
  write_text_file(out_dir / "estimates.json", estimates_json(config.seed, config_hash(config), est));
  return est;
}

std::vector<NamedEstimate> run_moments(const ScenarioConfig& config, const std::filesystem::path& out_dir) {
  const Scenario sc = config_scenario(config);
  const auto& mc = config.moments;
  const std::vector<std::string> ids = mc.observables.empty() ? std::vector<std::string>{"mass"} : mc.observables;
  const double t = default_time(config, mc.t);
  const EmpiricalMeasure nu = initial_measure(sc);
  std::vector<NamedEstimate> est;
  if (mc.s) {
    const auto fs = functions(config, ids);
    const ClosedFormResult r = closed_form_second_moment(fs[0], fs[1], *mc.s, t, nu, sc.model, mc.outer_nodes);
    est.push_back({"E X_s(" + ids[0] + ") X_t(" + ids[1] + ") s=" + format_double(*mc.s) + at(t), r.estimate});
  } else {
    FormulaSettings fs;
    fs.backend = mc.backend;
    fs.outer_nodes = mc.outer_nodes;
    fs.inner_nodes = mc.inner_nodes;
    fs.paths = PathSettings{mc.paths, sc.dt_max, sc.scheme};
    const TestFunction h = TestFunction::tensor(functions(config, ids));
    est.push_back({"E<" + join_ids(ids, "x") + ", X^" + std::to_string(ids.size()) + ">" + at(t),
                   moment_formula(h, nu, t, sc.model, fs, sc.source("formula"))});
  }
  if (!mc.laplace_rho.empty()) {
    if (!sc.model.has_constant_branching())
      throw Error(ErrorCode::NotClosedForm, "Laplace values need constant gamma and sigma");
    const Eigen::VectorXd origin = Eigen::VectorXd::Zero(sc.model.d());
    for (double rho : mc.laplace_rho) {
      MomentEstimate e;
      e.value = mass_laplace(rho, t, sc.model.gamma(origin), sc.model.sigma(origin), nu.total_mass());
      est.push_back({"E exp(-rho X(mass)) rho=" + format_double(rho) + at(t), e});
    }
  }
  ensure_dir(out_dir);
  write_text_file(out_dir / "estimates.json", estimates_json(config.seed, config_hash(config), est));
  return est;
}

VerificationReport run_suite(const ScenarioConfig& config, const SuiteConfig& suite) {
  const Scenario sc = config_scenario(config);
  const Tolerance tol{config.verify.z_threshold, std::nullopt, std::nullopt, Side::TwoSided};
  const double t = default_time(config, suite.t);
  auto ids_or = [&](std::vector<std::string> fallback) { return suite.observables.empty() ? fallback : suite.observables; };
  const auto all_ids = [&] {
    auto ids = observable_ids(config);
    if (ids.empty()) ids.push_back("mass");
    return ids;
  };
  const std::string& name = suite.name;

  if (name == "first-moment") {
    const auto ids = ids_or({"mass"});
    return verify_first_moment(sc, config_observable(config, ids.front()), t, tol);
  }
  if (name == "second-moment") {
    auto ids = ids_or({"mass", "mass"});
    if (ids.size() == 1) ids.push_back(ids.front());
    const double s = suite.s ? *suite.s : t;
    return verify_second_moment(sc, config_observable(config, ids[0]), config_observable(config, ids[1]), s, t, tol);
  }
  if (name == "laplace") {
    return verify_laplace(sc, suite.rho.empty() ? std::vector<double>{0.5, 1.0, 2.0} : suite.rho, t, tol);
  }
  if (name == "martingale") {
    std::vector<double> times = suite.times;
    if (times.empty()) times = config.run.snap_times.empty() ? std::vector<double>{config.run.horizon} : config.run.snap_times;
    return verify_martingale(sc, functions(config, ids_or(all_ids())), times, tol, suite.relative_cap.value_or(0.15));
  }
  if (name == "common-noise") {
    ScenarioConfig without = config;
    without.model.c = CoefficientField::constant(Eigen::MatrixXd::Zero(config.model.d, config.model.m));
    return verify_common_noise(config_scenario(without), sc, functions(config, ids_or(all_ids())), t,
                               suite.relative_cap.value_or(0.15));
  }
  if (name == "dual-skeleton") {
    return verify_dual_skeleton(suite.skeletons, suite.max_level, suite.horizon, sc.source("dual-skeleton"));
  }
  if (name == "offspring-law") return verify_offspring_laws(suite.draws, sc.source("offspring-law"));
  if (name == "sde-weak-order") {
    const TestFunction f = suite.observables.empty()
                               ? TestFunction::cosine(Eigen::VectorXd::Ones(config.model.d), 0.0)
                               : config_observable(config, suite.observables.front());
    const Eigen::VectorXd start = suite.start.size() ? suite.start : Eigen::VectorXd::Zero(config.model.d);
    const auto dts = suite.dts.empty() ? std::vector<double>{0.02, 0.01, 0.005} : suite.dts;
    return verify_weak_order(
        weak_order_study(sc.model, start, f, suite.horizon, dts, suite.paths, sc.source("sde-weak-order")));
  }
  if (name == "mollification") {
    const auto ids = ids_or({"mass"});
    const auto widths = suite.widths.empty() ? std::vector<double>{0.4, 0.2, 0.1} : suite.widths;
    return verify_mollification_trend(
        mollification_experiment(sc, widths, config_observable(config, ids.front()), t));
  }
  throw Error(ErrorCode::ValidationError, "unknown suite \"" + name + "\"");
}

std::vector<VerificationReport> run_verify(const ScenarioConfig& config, const std::filesystem::path& out_dir) {
  std::vector<VerificationReport> reports;
  for (const auto& s : config.verify.suites) reports.push_back(run_suite(config, s));
  ensure_dir(out_dir);
  write_text_file(out_dir / "verification.json", verification_json(config.seed, config_hash(config), reports));
  return reports;
}

}  // namespace flowsuper
