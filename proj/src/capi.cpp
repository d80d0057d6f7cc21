#include "flowsuper.h"

#include <exception>
#include <new>
#include <string>

#include "flowsuper/config.hpp"
#include "flowsuper/errors.hpp"
#include "flowsuper/moments.hpp"
#include "flowsuper/parallel.hpp"
#include "flowsuper/runner.hpp"

struct fs_scenario {
  flowsuper::ScenarioConfig config;
};

namespace {

thread_local std::string last_error;

template <class F>
int guarded(F&& body) {
  try {
    last_error.clear();
    body();
    return FS_OK;
  } catch (const flowsuper::Error& e) {
    last_error = e.what();
    return static_cast<int>(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return FS_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return FS_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown failure";
    return FS_ERR_INTERNAL;
  }
}

int invalid(const char* what) {
  last_error = what;
  return FS_ERR_INVALID_ARGUMENT;
}

}  // namespace

extern "C" {

int fs_scenario_load(const char* path, fs_scenario** out) {
  if (!path || !out) return invalid("null argument");
  *out = nullptr;
  return guarded([&] { *out = new fs_scenario{flowsuper::parse_config(path)}; });
}

int fs_scenario_from_json(const char* text, fs_scenario** out) {
  if (!text || !out) return invalid("null argument");
  *out = nullptr;
  return guarded([&] { *out = new fs_scenario{flowsuper::parse_config_text(text)}; });
}

void fs_scenario_free(fs_scenario* scenario) { delete scenario; }

int fs_scenario_set_seed(fs_scenario* scenario, uint64_t seed) {
  if (!scenario) return invalid("null scenario");
  scenario->config.seed = seed;
  last_error.clear();
  return FS_OK;
}

int fs_scenario_set_replicates(fs_scenario* scenario, uint64_t replicates) {
  if (!scenario) return invalid("null scenario");
  if (replicates < 2) {
    last_error = "InsufficientReplicates: need at least 2 replicates";
    return FS_ERR_INSUFFICIENT_REPLICATES;
  }
  scenario->config.run.replicates = static_cast<std::size_t>(replicates);
  last_error.clear();
  return FS_OK;
}

int fs_scenario_seed(const fs_scenario* scenario, uint64_t* out) {
  if (!scenario || !out) return invalid("null argument");
  *out = scenario->config.seed;
  last_error.clear();
  return FS_OK;
}

int fs_scenario_hash(const fs_scenario* scenario, char* buffer, size_t size) {
  if (!scenario || !buffer) return invalid("null argument");
  if (size < 17) return invalid("hash buffer needs 17 bytes");
  return guarded([&] {
    const std::string h = flowsuper::config_hash(scenario->config);
    h.copy(buffer, h.size());
    buffer[h.size()] = '\0';
  });
}

int fs_scenario_serialize(const fs_scenario* scenario, char* buffer, size_t size, size_t* needed) {
  if (!scenario || !needed) return invalid("null argument");
  return guarded([&] {
    const std::string text = flowsuper::serialize_config(scenario->config);
    *needed = text.size() + 1;
    if (buffer && size >= *needed) {
      text.copy(buffer, text.size());
      buffer[text.size()] = '\0';
    }
  });
}

int fs_set_threads(unsigned threads) {
  flowsuper::set_thread_count(threads);
  last_error.clear();
  return FS_OK;
}

int fs_run_simulate(const fs_scenario* scenario, const char* out_dir) {
  if (!scenario || !out_dir) return invalid("null argument");
  return guarded([&] { flowsuper::run_simulate(scenario->config, out_dir); });
}

int fs_run_dual(const fs_scenario* scenario, const char* out_dir) {
  if (!scenario || !out_dir) return invalid("null argument");
  return guarded([&] { flowsuper::run_dual(scenario->config, out_dir); });
}

int fs_run_moments(const fs_scenario* scenario, const char* out_dir) {
  if (!scenario || !out_dir) return invalid("null argument");
  return guarded([&] { flowsuper::run_moments(scenario->config, out_dir); });
}

int fs_run_verify(const fs_scenario* scenario, const char* out_dir, int* all_passed) {
  if (!scenario || !out_dir || !all_passed) return invalid("null argument");
  *all_passed = 0;
  return guarded([&] {
    bool ok = true;
    for (const auto& r : flowsuper::run_verify(scenario->config, out_dir)) ok = ok && r.passed();
    *all_passed = ok ? 1 : 0;
  });
}

int fs_offspring_law(double mean, double variance, int* support, double* probs, int* count) {
  if (!support || !probs || !count) return invalid("null argument");
  return guarded([&] {
    const auto law = flowsuper::offspring_law(mean, variance);
    *count = static_cast<int>(law.support.size());
    for (std::size_t i = 0; i < law.support.size(); ++i) {
      support[i] = law.support[i];
      probs[i] = law.probs[i];
    }
  });
}

int fs_mass_laplace(double rho, double t, double gamma, double sigma, double initial_mass, double* out) {
  if (!out) return invalid("null argument");
  return guarded([&] { *out = flowsuper::mass_laplace(rho, t, gamma, sigma, initial_mass); });
}

const char* fs_last_error(void) { return last_error.c_str(); }

const char* fs_error_name(int code) {
  if (code == FS_OK) return "Ok";
  if (code == FS_ERR_INVALID_ARGUMENT) return "InvalidArgument";
  if (code == FS_ERR_INTERNAL) return "Internal";
  if (code >= FS_ERR_SHAPE_MISMATCH && code <= FS_ERR_UNSUPPORTED)
    return flowsuper::error_code_name(static_cast<flowsuper::ErrorCode>(code)).data();
  return "UnknownCode";
}

const char* fs_version(void) { return "0.1.0"; }

}  // extern "C"
