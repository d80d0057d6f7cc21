#include "flowsuper/report.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>

#include "flowsuper/errors.hpp"

namespace flowsuper {

using nlohmann::ordered_json;

namespace {

ordered_json number(double x) { return std::isfinite(x) ? ordered_json(x) : ordered_json(nullptr); }

}  // namespace

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string timeseries_csv(const std::vector<TimeSeries>& runs, const std::vector<std::string>& observable_ids) {
  std::string out = "replicate,t,observable_id,value\n";
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const auto& ts = runs[r];
    for (std::size_t s = 0; s < ts.times.size(); ++s) {
      const std::string prefix = std::to_string(r) + "," + format_double(ts.times[s]) + ",";
      out += prefix + "mass," + format_double(ts.mass[s]) + "\n";
      for (std::size_t j = 0; j < observable_ids.size(); ++j)
        out += prefix + observable_ids[j] + "," + format_double(ts.values[s][j]) + "\n";
    }
  }
  return out;
}

std::string estimates_json(std::uint64_t seed, const std::string& config_hash,
                           const std::vector<NamedEstimate>& estimates) {
  ordered_json j;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  ordered_json list = ordered_json::array();
  for (const auto& e : estimates) {
    list.push_back({{"name", e.name},
                    {"value", number(e.estimate.value)},
                    {"stderr", number(e.estimate.std_error)},
                    {"provenance", std::string(provenance_name(e.estimate.provenance))},
                    {"replicates", e.estimate.replicates}});
  }
  j["estimates"] = list;
  return j.dump(2) + "\n";
}

std::string verification_json(std::uint64_t seed, const std::string& config_hash,
                              const std::vector<VerificationReport>& reports) {
  ordered_json j;
  std::string suite;
  bool passed = true;
  ordered_json checks = ordered_json::array();
  for (const auto& rep : reports) {
    suite += (suite.empty() ? "" : "+") + rep.suite;
    passed = passed && rep.passed();
    for (const auto& c : rep.checks) {
      ordered_json cj{{"name", rep.suite + ": " + c.name},
                      {"estimate", number(c.estimate.value)},
                      {"stderr", number(c.estimate.std_error)},
                      {"reference", number(c.reference.value)},
                      {"ref_stderr", number(c.reference.std_error)},
                      {"z", number(c.z)},
                      {"pass", c.pass},
                      {"relative_error", number(c.relative_error)},
                      {"provenance", std::string(provenance_name(c.estimate.provenance))},
                      {"ref_provenance", std::string(provenance_name(c.reference.provenance))},
                      {"replicates", c.estimate.replicates}};
      ordered_json tol = ordered_json::object();
      tol["z_threshold"] = c.tolerance.z_threshold ? number(*c.tolerance.z_threshold) : ordered_json(nullptr);
      tol["relative_cap"] = c.tolerance.relative_cap ? number(*c.tolerance.relative_cap) : ordered_json(nullptr);
      tol["absolute_cap"] = c.tolerance.absolute_cap ? number(*c.tolerance.absolute_cap) : ordered_json(nullptr);
      tol["side"] = c.tolerance.side == Side::TwoSided ? "two-sided" : c.tolerance.side == Side::Upper ? "upper" : "lower";
      cj["tolerance"] = tol;
      checks.push_back(cj);
    }
  }
  j["suite"] = suite;
  j["checks"] = checks;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  j["passed"] = passed;
  return j.dump(2) + "\n";
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << content;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace flowsuper
