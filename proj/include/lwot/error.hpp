#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lwot {

enum class ErrorCode {
  EmptyMeasure,
  EmptyInput,
  NotProbability,
  DimMismatch,
  ProblemTooLarge,
  UnsupportedDim,
  MalformedLimb,
  GhostTooLarge,
  W3ViolationDetected,
  BoundsUnavailable,
  InvalidExponent,
  InvalidQuantile,
  InvalidArgument,
  ParseError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyMeasure: return "EmptyMeasure";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NotProbability: return "NotProbability";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::ProblemTooLarge: return "ProblemTooLarge";
    case ErrorCode::UnsupportedDim: return "UnsupportedDim";
    case ErrorCode::MalformedLimb: return "MalformedLimb";
    case ErrorCode::GhostTooLarge: return "GhostTooLarge";
    case ErrorCode::W3ViolationDetected: return "W3ViolationDetected";
    case ErrorCode::BoundsUnavailable: return "BoundsUnavailable";
    case ErrorCode::InvalidExponent: return "InvalidExponent";
    case ErrorCode::InvalidQuantile: return "InvalidQuantile";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above; the
/// CLI maps them onto its structured error document.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace lwot
