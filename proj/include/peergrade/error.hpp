#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace peergrade {

enum class ErrorCode {
  EmptyData,
  SelfGrading,
  DuplicateEdge,
  NonFiniteGrade,
  OutOfScale,
  DataSchema,
  UnsupportedCombination,
  DimensionMismatch,
  NonPositiveVariance,
  PrecisionNotPositive,
  NonPositivePhi,
  UnknownStudentOrAssessment,
  InitFailure,
  AllDivergent,
  DegenerateChains,
  InsufficientDraws,
  MismatchedObservations,
  UnsupportedVariant,
  InvalidM,
  InvalidConfig,
  DataHashMismatch,
  Io,
};

/// Machine-readable upper-snake-case name, e.g. "DATA_SCHEMA".
std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace peergrade
