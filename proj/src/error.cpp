#include "cqgrating/error.hpp"

namespace cqgrating {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NonAnalyticPoint: return "NonAnalyticPoint";
    case ErrorCode::BranchAmbiguity: return "BranchAmbiguity";
    case ErrorCode::InvalidDims: return "InvalidDims";
    case ErrorCode::InvalidMesh: return "InvalidMesh";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::NonMatchingPeriodicBoundary: return "NonMatchingPeriodicBoundary";
    case ErrorCode::TangledElement: return "TangledElement";
    case ErrorCode::GapInBoundary: return "GapInBoundary";
    case ErrorCode::MaterialMissing: return "MaterialMissing";
    case ErrorCode::InvalidParameter: return "InvalidParameter";
    case ErrorCode::TruncationMismatch: return "TruncationMismatch";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::AssumptionViolated: return "AssumptionViolated";
    case ErrorCode::ContourTouchesAxis: return "ContourTouchesAxis";
    case ErrorCode::PartialContourFailure: return "PartialContourFailure";
    case ErrorCode::DegenerateLayer: return "DegenerateLayer";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace cqgrating
