#include "flowsuper/estimate.hpp"

#include <cmath>

#include "flowsuper/errors.hpp"

namespace flowsuper {

std::string_view provenance_name(Provenance p) noexcept {
  switch (p) {
    case Provenance::Particle: return "particle";
    case Provenance::Dual: return "dual";
    case Provenance::FormulaMc: return "formula-mc";
    case Provenance::FormulaClosed: return "formula-closed";
  }
  return "unknown";
}

MomentEstimate sample_estimate(std::span<const double> samples, Provenance provenance) {
  const std::size_t r = samples.size();
  if (r < 2) throw Error(ErrorCode::InsufficientReplicates, "need at least 2 samples, got " + std::to_string(r));
  double sum = 0.0;
  for (double s : samples) sum += s;
  const double mean = sum / static_cast<double>(r);
  double ss = 0.0;
  for (double s : samples) ss += (s - mean) * (s - mean);
  const double var = ss / static_cast<double>(r - 1);
  return MomentEstimate{mean, std::sqrt(var / static_cast<double>(r)), provenance, r};
}

}  // namespace flowsuper
