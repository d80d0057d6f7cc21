#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace flowsuper {

enum class ErrorCode {
  ShapeMismatch = 1,
  BoundViolation,
  NegativeSigma,
  InfeasibleLaw,
  NonFinite,
  NotAffine,
  EmptyInitial,
  PopulationExplosion,
  InsufficientReplicates,
  DimensionMismatch,
  LevelTooLow,
  UnsupportedOrder,
  NotClosedForm,
  BadTimeOrder,
  ParseError,
  UnknownKey,
  ValidationError,
  IoError,
  Unsupported,
};

std::string_view error_code_name(ErrorCode code) noexcept;

// Every failure raised by the library carries one of the codes above so the
// C layer can translate it without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace flowsuper
