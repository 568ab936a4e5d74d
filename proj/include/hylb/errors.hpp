#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hylb {

enum class ErrorCode {
  UnsupportedDistance,
  DegenerateDomain,
  DimensionMismatch,
  BadInitialCondition,
  OutOfDomain,
  HorizonTooShort,
  MissingIndicator,
  MissingBarrier,
  DomainViolation,
  NoConvergence,
  InvalidArgument,
  ConfigError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnsupportedDistance: return "UnsupportedDistance";
    case ErrorCode::DegenerateDomain: return "DegenerateDomain";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::BadInitialCondition: return "BadInitialCondition";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::HorizonTooShort: return "HorizonTooShort";
    case ErrorCode::MissingIndicator: return "MissingIndicator";
    case ErrorCode::MissingBarrier: return "MissingBarrier";
    case ErrorCode::DomainViolation: return "DomainViolation";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every error raised by the toolkit carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), message_(what) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace hylb
