#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "flowsuper/model.hpp"
#include "flowsuper/moments.hpp"
#include "flowsuper/particles.hpp"
#include "flowsuper/sde.hpp"
#include "flowsuper/test_function.hpp"

namespace flowsuper {

/// A named level-1 test function. The id "mass" is reserved for X(1).
struct ObservableSpec {
  std::string id;
  SlotKind kind = SlotKind::One;
  Eigen::VectorXd theta;
  double phi = 0.0;
  double lambda = 1.0;
  Eigen::VectorXd center;

  TestFunction function(int d) const;
};

struct RunConfig {
  double horizon = 1.0;
  double dt_max = 0.01;
  std::size_t replicates = 100;
  std::vector<double> snap_times;  // empty means {T}
  MotionScheme scheme = MotionScheme::Euler;
  std::size_t population_cap = 10'000'000;
  std::vector<ObservableSpec> observables;
};

struct DualConfig {
  int n0 = 1;
  std::size_t paths = 10000;
  std::vector<std::string> observables;  // one id per slot; empty means "mass" in every slot
  std::optional<double> t;               // defaults to run.T
};

struct MomentsConfig {
  std::optional<double> t;  // defaults to run.T
  std::optional<double> s;  // second time for a mixed-time second moment
  std::vector<std::string> observables;
  FormulaBackend backend = FormulaBackend::Closed;
  std::size_t paths = 10000;
  int outer_nodes = 32;
  int inner_nodes = 16;
  std::vector<double> laplace_rho;
};

/// One verification suite. Only the keys listed for the suite's name are
/// accepted in the file; unlisted fields keep their defaults.
struct SuiteConfig {
  std::string name;
  std::vector<std::string> observables;
  std::optional<double> t;
  std::optional<double> s;
  std::vector<double> rho;
  std::vector<double> times;
  std::optional<double> relative_cap;
  std::size_t skeletons = 100000;
  int max_level = 4;
  double horizon = 5.0;
  std::size_t draws = 1000;
  std::vector<double> dts;
  std::size_t paths = 100000;
  Eigen::VectorXd start;
  std::vector<double> widths;
};

struct VerifyConfig {
  double z_threshold = 3.0;
  std::size_t formula_paths = 0;
  std::vector<SuiteConfig> suites;
};

struct ScenarioConfig {
  std::uint64_t seed = 0;
  ModelSpec model;
  ScaleSpec scale;
  RunConfig run;
  DualConfig dual;
  MomentsConfig moments;
  VerifyConfig verify;
};

/// Suite names understood by the verify subcommand.
const std::vector<std::string>& suite_names();

ScenarioConfig parse_config_text(const std::string& text);
ScenarioConfig parse_config(const std::filesystem::path& path);
/// Canonical JSON with every default spelled out.
std::string serialize_config(const ScenarioConfig& config);
/// FNV-1a of the canonical form with the seed left out, as 16 hex digits.
std::string config_hash(const ScenarioConfig& config);

/// Model checked by validate_model.
ValidatedModel config_model(const ScenarioConfig& config);
/// Observable by id, "mass" giving the constant 1.
TestFunction config_observable(const ScenarioConfig& config, const std::string& id);

}  // namespace flowsuper
