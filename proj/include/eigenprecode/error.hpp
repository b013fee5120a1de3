#pragma once

#include <stdexcept>
#include <string>

namespace eigenprecode {

enum class ErrorKind {
  // argument / usage
  InvalidArgument,
  DimensionMismatch,
  ShapeMismatch,
  InvalidConfig,
  BadFractions,
  EmptyDataset,
  MissingWeights,
  RequiresCriticalSampling,
  RequiresStatisticalOnly,
  AllZeroChannels,
  // numerical
  NotHermitian,
  NotPositiveDefinite,
  SingularN,
  NoConvergence,
  MaxIterExceeded,
  SingularSystem,
  SingularT,
  NegativePower,
  NegativeMultiplier,
  TooManyRejections,
  // io
  Io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::BadFractions: return "BadFractions";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::MissingWeights: return "MissingWeights";
    case ErrorKind::RequiresCriticalSampling: return "RequiresCriticalSampling";
    case ErrorKind::RequiresStatisticalOnly: return "RequiresStatisticalOnly";
    case ErrorKind::AllZeroChannels: return "AllZeroChannels";
    case ErrorKind::NotHermitian: return "NotHermitian";
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::SingularN: return "SingularN";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::MaxIterExceeded: return "MaxIterExceeded";
    case ErrorKind::SingularSystem: return "SingularSystem";
    case ErrorKind::SingularT: return "SingularT";
    case ErrorKind::NegativePower: return "NegativePower";
    case ErrorKind::NegativeMultiplier: return "NegativeMultiplier";
    case ErrorKind::TooManyRejections: return "TooManyRejections";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// Error category used to map failures onto CLI exit codes.
enum class ErrorClass { Usage, Numerical, Io };

inline ErrorClass classify(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotHermitian:
    case ErrorKind::NotPositiveDefinite:
    case ErrorKind::SingularN:
    case ErrorKind::NoConvergence:
    case ErrorKind::MaxIterExceeded:
    case ErrorKind::SingularSystem:
    case ErrorKind::SingularT:
    case ErrorKind::NegativePower:
    case ErrorKind::NegativeMultiplier:
    case ErrorKind::TooManyRejections:
      return ErrorClass::Numerical;
    case ErrorKind::Io:
      return ErrorClass::Io;
    default:
      return ErrorClass::Usage;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace eigenprecode
