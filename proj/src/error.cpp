#include "peergrade/error.hpp"

namespace peergrade {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyData: return "EMPTY_DATA";
    case ErrorCode::SelfGrading: return "SELF_GRADING";
    case ErrorCode::DuplicateEdge: return "DUPLICATE_EDGE";
    case ErrorCode::NonFiniteGrade: return "NON_FINITE_GRADE";
    case ErrorCode::OutOfScale: return "OUT_OF_SCALE";
    case ErrorCode::DataSchema: return "DATA_SCHEMA";
    case ErrorCode::UnsupportedCombination: return "UNSUPPORTED_COMBINATION";
    case ErrorCode::DimensionMismatch: return "DIMENSION_MISMATCH";
    case ErrorCode::NonPositiveVariance: return "NON_POSITIVE_VARIANCE";
    case ErrorCode::PrecisionNotPositive: return "PRECISION_NOT_POSITIVE";
    case ErrorCode::NonPositivePhi: return "NON_POSITIVE_PHI";
    case ErrorCode::UnknownStudentOrAssessment: return "UNKNOWN_STUDENT_OR_ASSESSMENT";
    case ErrorCode::InitFailure: return "INIT_FAILURE";
    case ErrorCode::AllDivergent: return "ALL_DIVERGENT";
    case ErrorCode::DegenerateChains: return "DEGENERATE_CHAINS";
    case ErrorCode::InsufficientDraws: return "INSUFFICIENT_DRAWS";
    case ErrorCode::MismatchedObservations: return "MISMATCHED_OBSERVATIONS";
    case ErrorCode::UnsupportedVariant: return "UNSUPPORTED_VARIANT";
    case ErrorCode::InvalidM: return "INVALID_M";
    case ErrorCode::InvalidConfig: return "INVALID_CONFIG";
    case ErrorCode::DataHashMismatch: return "DATA_HASH_MISMATCH";
    case ErrorCode::Io: return "IO";
  }
  return "UNKNOWN";
}

}  // namespace peergrade
