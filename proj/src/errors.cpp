#include "flowsuper/errors.hpp"

namespace flowsuper {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::BoundViolation: return "BoundViolation";
    case ErrorCode::NegativeSigma: return "NegativeSigma";
    case ErrorCode::InfeasibleLaw: return "InfeasibleLaw";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::NotAffine: return "NotAffine";
    case ErrorCode::EmptyInitial: return "EmptyInitial";
    case ErrorCode::PopulationExplosion: return "PopulationExplosion";
    case ErrorCode::InsufficientReplicates: return "InsufficientReplicates";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::LevelTooLow: return "LevelTooLow";
    case ErrorCode::UnsupportedOrder: return "UnsupportedOrder";
    case ErrorCode::NotClosedForm: return "NotClosedForm";
    case ErrorCode::BadTimeOrder: return "BadTimeOrder";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnknownKey: return "UnknownKey";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::Unsupported: return "Unsupported";
  }
  return "Unknown";
}

}  // namespace flowsuper
