#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace finsler {

enum class ErrorCode {
  ZeroFiberVector,
  NotStronglyConvex,
  SingularMetric,
  NonpositiveDensity,
  LegendreNoConvergence,
  LeftChart,
  InvalidK,
  DomainError,
  NonSmoothDistance,
  ZeroGradientReference,
  SupportViolation,
  NotExpHarmonicAt,
  MaxIterationsExceeded,
  LineSearchStall,
  BoundTooSmall,
  CurvatureHypothesisViolated,
  ConfigParse,
  BadPointsRow,
  InvalidArgument,
};

inline std::string_view to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::ZeroFiberVector: return "ZeroFiberVector";
    case ErrorCode::NotStronglyConvex: return "NotStronglyConvex";
    case ErrorCode::SingularMetric: return "SingularMetric";
    case ErrorCode::NonpositiveDensity: return "NonpositiveDensity";
    case ErrorCode::LegendreNoConvergence: return "LegendreNoConvergence";
    case ErrorCode::LeftChart: return "LeftChart";
    case ErrorCode::InvalidK: return "InvalidK";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::NonSmoothDistance: return "NonSmoothDistance";
    case ErrorCode::ZeroGradientReference: return "ZeroGradientReference";
    case ErrorCode::SupportViolation: return "SupportViolation";
    case ErrorCode::NotExpHarmonicAt: return "NotExpHarmonicAt";
    case ErrorCode::MaxIterationsExceeded: return "MaxIterationsExceeded";
    case ErrorCode::LineSearchStall: return "LineSearchStall";
    case ErrorCode::BoundTooSmall: return "BoundTooSmall";
    case ErrorCode::CurvatureHypothesisViolated: return "CurvatureHypothesisViolated";
    case ErrorCode::ConfigParse: return "ConfigParse";
    case ErrorCode::BadPointsRow: return "BadPointsRow";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Single exception type for the library; `code()` tells callers which contract failed.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace finsler
