#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hjrobust {

enum class ErrorCode {
  MalformedCsv,
  EmptyPanel,
  NoOverlap,
  DimensionMismatch,
  NonPositiveDefinite,
  RankDeficient,
  SingularErrorCovariance,
  AccuracyNotReached,
  ZeroConstantCoefficient,
  WeakInstrumentSingularity,
  SingularTestingMoment,
  InvalidCalibration,
  InvalidArgument,
  SchemaError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedCsv: return "MalformedCsv";
    case ErrorCode::EmptyPanel: return "EmptyPanel";
    case ErrorCode::NoOverlap: return "NoOverlap";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonPositiveDefinite: return "NonPositiveDefinite";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::SingularErrorCovariance: return "SingularErrorCovariance";
    case ErrorCode::AccuracyNotReached: return "AccuracyNotReached";
    case ErrorCode::ZeroConstantCoefficient: return "ZeroConstantCoefficient";
    case ErrorCode::WeakInstrumentSingularity: return "WeakInstrumentSingularity";
    case ErrorCode::SingularTestingMoment: return "SingularTestingMoment";
    case ErrorCode::InvalidCalibration: return "InvalidCalibration";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SchemaError: return "SchemaError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so the
/// CLI can map it to a structured error message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

// Non-fatal conditions surfaced in reports. Closed set.
enum class Warning {
  BoundaryContact,
  MonteCarloFallback,
  OmittedThetaDriftTerm,
  WeightCountMismatch,
  TestingRatioHigh,
  SingularGridPoints,
  EmptyConfidenceSet,
};

inline std::string_view to_string(Warning w) {
  switch (w) {
    case Warning::BoundaryContact: return "boundary_contact";
    case Warning::MonteCarloFallback: return "mc_fallback";
    case Warning::OmittedThetaDriftTerm: return "omitted_theta_drift_term";
    case Warning::WeightCountMismatch: return "weight_count_mismatch";
    case Warning::TestingRatioHigh: return "testing_ratio_high";
    case Warning::SingularGridPoints: return "singular_grid_points";
    case Warning::EmptyConfidenceSet: return "empty_confidence_set";
  }
  return "unknown";
}

}  // namespace hjrobust
