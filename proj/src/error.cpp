#include "gpsysid/error.hpp"

namespace gpsysid {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NumericalInconsistency: return "NumericalInconsistency";
    case ErrorCode::UnsupportedKernel: return "UnsupportedKernel";
    case ErrorCode::DuplicateTimes: return "DuplicateTimes";
    case ErrorCode::SequenceTooShort: return "SequenceTooShort";
    case ErrorCode::MissingInput: return "MissingInput";
    case ErrorCode::InsufficientHistory: return "InsufficientHistory";
    case ErrorCode::InvalidDomain: return "InvalidDomain";
    case ErrorCode::StateOutsideDomain: return "StateOutsideDomain";
    case ErrorCode::DegenerateWeights: return "DegenerateWeights";
    case ErrorCode::UnknownGenerator: return "UnknownGenerator";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

}  // namespace gpsysid
