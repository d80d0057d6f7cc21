#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace flowsuper {

enum class Provenance { Particle, Dual, FormulaMc, FormulaClosed };

std::string_view provenance_name(Provenance p) noexcept;

struct MomentEstimate {
  double value = 0.0;
  double std_error = 0.0;
  Provenance provenance = Provenance::FormulaClosed;
  std::size_t replicates = 0;
};

/// Mean and standard error over independent samples, summed in index order.
MomentEstimate sample_estimate(std::span<const double> samples, Provenance provenance);

}  // namespace flowsuper
