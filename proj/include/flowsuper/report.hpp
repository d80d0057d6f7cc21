#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flowsuper/estimate.hpp"
#include "flowsuper/harness.hpp"
#include "flowsuper/particles.hpp"

namespace flowsuper {

/// Shortest decimal that parses back to the same double.
std::string format_double(double x);

/// Columns replicate,t,observable_id,value; for every replicate and snapshot
/// the total mass row comes first, then the observables in order.
std::string timeseries_csv(const std::vector<TimeSeries>& runs, const std::vector<std::string>& observable_ids);

struct NamedEstimate {
  std::string name;
  MomentEstimate estimate;
};

std::string estimates_json(std::uint64_t seed, const std::string& config_hash,
                           const std::vector<NamedEstimate>& estimates);

/// All suites flattened into one report; check names carry the suite prefix.
std::string verification_json(std::uint64_t seed, const std::string& config_hash,
                              const std::vector<VerificationReport>& reports);

void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace flowsuper
