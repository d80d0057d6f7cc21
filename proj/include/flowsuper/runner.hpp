#pragma once

#include <filesystem>
#include <vector>

#include "flowsuper/config.hpp"
#include "flowsuper/harness.hpp"
#include "flowsuper/report.hpp"

namespace flowsuper {

/// Scenario seen by the verification suites.
Scenario config_scenario(const ScenarioConfig& config);

/// Particle replicates; writes timeseries.csv and estimates.json.
std::vector<NamedEstimate> run_simulate(const ScenarioConfig& config, const std::filesystem::path& out_dir);
/// Dual estimate of E <h, X_t^{n0}>; writes estimates.json.
std::vector<NamedEstimate> run_dual(const ScenarioConfig& config, const std::filesystem::path& out_dir);
/// Moment formulas and Laplace values; writes estimates.json.
std::vector<NamedEstimate> run_moments(const ScenarioConfig& config, const std::filesystem::path& out_dir);
/// Every configured suite in order; writes verification.json.
std::vector<VerificationReport> run_verify(const ScenarioConfig& config, const std::filesystem::path& out_dir);

/// One suite by its config entry.
VerificationReport run_suite(const ScenarioConfig& config, const SuiteConfig& suite);

}  // namespace flowsuper
