#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "flowsuper.h"

namespace {

std::string data(const char* name) { return std::string(FLOWSUPER_TEST_DATA) + "/" + name; }

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("flowsuper_capi_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("scenario lifecycle and accessors") {
  fs_scenario* s = nullptr;
  REQUIRE(fs_scenario_load(data("minimal.json").c_str(), &s) == FS_OK);
  REQUIRE(s != nullptr);
  CHECK(std::string(fs_last_error()).empty());
  uint64_t seed = 0;
  CHECK(fs_scenario_seed(s, &seed) == FS_OK);
  CHECK(seed == 7);
  char hash[17];
  CHECK(fs_scenario_hash(s, hash, sizeof hash) == FS_OK);
  CHECK(std::strlen(hash) == 16);
  const std::string before = hash;
  CHECK(fs_scenario_set_seed(s, 99) == FS_OK);
  CHECK(fs_scenario_hash(s, hash, sizeof hash) == FS_OK);
  CHECK(before == hash);
  CHECK(fs_scenario_set_replicates(s, 1) == FS_ERR_INSUFFICIENT_REPLICATES);
  CHECK(fs_scenario_set_replicates(s, 50) == FS_OK);
  CHECK(fs_scenario_hash(s, hash, sizeof hash) == FS_OK);
  CHECK(before != hash);
  CHECK(fs_scenario_hash(s, hash, 4) == FS_ERR_INVALID_ARGUMENT);

  size_t needed = 0;
  CHECK(fs_scenario_serialize(s, nullptr, 0, &needed) == FS_OK);
  std::string text(needed, '\0');
  CHECK(fs_scenario_serialize(s, text.data(), text.size(), &needed) == FS_OK);
  text.resize(needed - 1);
  fs_scenario* copy = nullptr;
  REQUIRE(fs_scenario_from_json(text.c_str(), &copy) == FS_OK);
  uint64_t copy_seed = 0;
  fs_scenario_seed(copy, &copy_seed);
  CHECK(copy_seed == 99);
  fs_scenario_free(copy);
  fs_scenario_free(s);
  fs_scenario_free(nullptr);
}

TEST_CASE("errors map to codes with messages") {
  fs_scenario* s = nullptr;
  CHECK(fs_scenario_load("/nonexistent.json", &s) == FS_ERR_IO);
  CHECK(s == nullptr);
  CHECK(std::string(fs_last_error()).find("cannot open") != std::string::npos);
  CHECK(fs_scenario_from_json("{", &s) == FS_ERR_PARSE);
  CHECK(fs_scenario_from_json(R"({"gama": 1})", &s) == FS_ERR_UNKNOWN_KEY);
  CHECK(std::string(fs_last_error()).find("gama") != std::string::npos);
  CHECK(fs_scenario_from_json(nullptr, &s) == FS_ERR_INVALID_ARGUMENT);
  CHECK(std::string(fs_error_name(FS_ERR_UNKNOWN_KEY)) == "UnknownKey");
  CHECK(std::string(fs_error_name(FS_ERR_UNSUPPORTED)) == "Unsupported");
  CHECK(std::string(fs_error_name(FS_OK)) == "Ok");
  CHECK(std::string(fs_error_name(12345)) == "UnknownCode");
  CHECK(std::string(fs_version()).size() > 0);
}

TEST_CASE("offspring law and Laplace through the C layer") {
  int support[3];
  double probs[3];
  int count = 0;
  REQUIRE(fs_offspring_law(1.1, 0.5, support, probs, &count) == FS_OK);
  REQUIRE(count == 3);
  CHECK(support[2] == 2);
  CHECK(probs[0] == doctest::Approx(0.205));
  CHECK(probs[1] == doctest::Approx(0.49));
  CHECK(probs[2] == doctest::Approx(0.305));
  CHECK(fs_offspring_law(1.005, 0.0, support, probs, &count) == FS_ERR_INFEASIBLE_LAW);
  double v = 0.0;
  REQUIRE(fs_mass_laplace(1.0, std::log(2.0), 1.0, std::sqrt(2.0), 1.0, &v) == FS_OK);
  CHECK(v == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(fs_mass_laplace(1.0, 1.0, 1.0, 1.0, 1.0, nullptr) == FS_ERR_INVALID_ARGUMENT);
}

TEST_CASE("runs write their files, verify reports pass and fail") {
  const auto dir = scratch("runs");
  fs_scenario* s = nullptr;
  REQUIRE(fs_scenario_load(data("verify_small.json").c_str(), &s) == FS_OK);
  CHECK(fs_run_simulate(s, (dir / "sim").c_str()) == FS_OK);
  CHECK(std::filesystem::exists(dir / "sim" / "timeseries.csv"));
  CHECK(std::filesystem::exists(dir / "sim" / "estimates.json"));
  CHECK(fs_run_dual(s, (dir / "dual").c_str()) == FS_OK);
  CHECK(fs_run_moments(s, (dir / "mom").c_str()) == FS_OK);
  int passed = -1;
  CHECK(fs_run_verify(s, (dir / "ver").c_str(), &passed) == FS_OK);
  CHECK(passed == 1);
  CHECK(slurp(dir / "ver" / "verification.json").find("\"passed\": true") != std::string::npos);
  fs_scenario_free(s);

  REQUIRE(fs_scenario_load(data("verify_strict.json").c_str(), &s) == FS_OK);
  CHECK(fs_run_verify(s, (dir / "strict").c_str(), &passed) == FS_OK);
  CHECK(passed == 0);
  fs_scenario_free(s);
  std::filesystem::remove_all(dir);
}
