// Command-line front end. Talks to the library only through flowsuper.h.
#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "flowsuper.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerificationFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> replicates;
  std::string out = ".";
  std::optional<unsigned> threads;
};

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "scenario config (JSON)")->required();
  sub->add_option("--seed", o.seed, "override the master seed");
  sub->add_option("--replicates", o.replicates, "override run.replicates");
  sub->add_option("--out", o.out, "output directory")->capture_default_str();
  sub->add_option("--threads", o.threads, "worker threads (default: THREADS or all cores)");
}

int report(const char* what, int code) {
  std::cerr << "flowsuper " << what << ": " << fs_error_name(code) << ": " << fs_last_error() << "\n";
  return code;
}

using ScenarioPtr = std::unique_ptr<fs_scenario, decltype(&fs_scenario_free)>;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Branching particle, dual and moment-formula simulator with cross-verification"};
  app.require_subcommand(1);
  Options opts;
  CLI::App* simulate = app.add_subcommand("simulate", "run particle replicates; writes timeseries.csv, estimates.json");
  CLI::App* dual = app.add_subcommand("dual", "dual process estimate; writes estimates.json");
  CLI::App* moments = app.add_subcommand("moments", "moment formulas; writes estimates.json");
  CLI::App* verify = app.add_subcommand("verify", "verification suites; writes verification.json");
  for (CLI::App* sub : {simulate, dual, moments, verify}) add_common(sub, opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  fs_scenario* raw = nullptr;
  if (const int rc = fs_scenario_load(opts.config.c_str(), &raw); rc != FS_OK) {
    report("config", rc);
    return kExitUsage;
  }
  ScenarioPtr scenario(raw, &fs_scenario_free);
  if (opts.seed) fs_scenario_set_seed(scenario.get(), *opts.seed);
  if (opts.replicates) {
    if (const int rc = fs_scenario_set_replicates(scenario.get(), *opts.replicates); rc != FS_OK) {
      report("config", rc);
      return kExitUsage;
    }
  }
  if (opts.threads) fs_set_threads(*opts.threads);

  const char* out = opts.out.c_str();
  int rc = FS_OK;
  if (simulate->parsed()) {
    rc = fs_run_simulate(scenario.get(), out);
  } else if (dual->parsed()) {
    rc = fs_run_dual(scenario.get(), out);
  } else if (moments->parsed()) {
    rc = fs_run_moments(scenario.get(), out);
  } else {
    int passed = 0;
    rc = fs_run_verify(scenario.get(), out, &passed);
    if (rc == FS_OK) {
      std::cout << (passed ? "verification passed" : "verification FAILED") << " (" << opts.out
                << "/verification.json)\n";
      return passed ? kExitOk : kExitVerificationFailed;
    }
  }
  if (rc != FS_OK) {
    report("run", rc);
    return kExitRuntime;
  }
  std::cout << "wrote results to " << opts.out << "\n";
  return kExitOk;
}
