#pragma once

#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cqgrating {

using Complex = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;

enum class ErrorCode {
  NonAnalyticPoint,
  BranchAmbiguity,
  InvalidDims,
  InvalidMesh,
  ParseError,
  NonMatchingPeriodicBoundary,
  TangledElement,
  GapInBoundary,
  MaterialMissing,
  InvalidParameter,
  TruncationMismatch,
  SingularSystem,
  AssumptionViolated,
  ContourTouchesAxis,
  PartialContourFailure,
  DegenerateLayer,
  InvalidConfig,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries one of the codes above so that
// callers (and the CLI exit path) can branch on the kind of failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cqgrating
