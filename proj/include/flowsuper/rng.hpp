#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace flowsuper {

/// A single reproducible random stream. Not thread-safe; one per task.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  /// Uniform on [0, 1).
  double uniform() { return uniform_(engine_); }
  /// Unit-mean exponential.
  double exponential() { return exponential_(engine_); }
  std::uint64_t below(std::uint64_t bound) {
    return std::uniform_int_distribution<std::uint64_t>(0, bound - 1)(engine_);
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::exponential_distribution<double> exponential_{1.0};
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// Counter-based stream derivation: (master seed, purpose tag, index) maps to
/// an independent stream. The mapping does not depend on thread count or on
/// which other streams were derived before.
class RngPolicy {
 public:
  explicit RngPolicy(std::uint64_t master_seed) : seed_(master_seed) {}

  std::uint64_t master_seed() const noexcept { return seed_; }
  std::uint64_t derive_seed(std::string_view tag, std::uint64_t index) const noexcept;
  RandomStream stream(std::string_view tag, std::uint64_t index) const {
    return RandomStream(derive_seed(tag, index));
  }

 private:
  std::uint64_t seed_;
};

/// An RngPolicy bound to a purpose tag. Sub-tasks extend the tag.
class StreamSource {
 public:
  StreamSource(RngPolicy policy, std::string tag) : policy_(policy), tag_(std::move(tag)) {}

  RandomStream stream(std::uint64_t index) const { return policy_.stream(tag_, index); }
  StreamSource child(std::string_view suffix) const {
    return StreamSource(policy_, tag_ + "/" + std::string(suffix));
  }
  const std::string& tag() const noexcept { return tag_; }
  const RngPolicy& policy() const noexcept { return policy_; }

 private:
  RngPolicy policy_;
  std::string tag_;
};

}  // namespace flowsuper
