#include "flowsuper/rng.hpp"

namespace flowsuper {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t RngPolicy::derive_seed(std::string_view tag, std::uint64_t index) const noexcept {
  std::uint64_t h = splitmix64(seed_);
  h = splitmix64(h ^ fnv1a64(tag));
  return splitmix64(h ^ splitmix64(index));
}

}  // namespace flowsuper
