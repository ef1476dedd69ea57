#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stocs {

enum class ErrorCode {
  InvalidArgument,
  DegenerateConfiguration,
  EmptyCloud,
  TooFewPoints,
  CoincidentPoints,
  IoError,
  FormatVersionMismatch,
  AllPixelsInvalid,
  ClassSetMismatch,
  UnknownClass,
  InsufficientSupport,
  NoHypothesisFound,
  InsufficientOverlap,
  NotVisible,
  ObjectOutOfFrustum,
  KTooLarge,
  DimensionMismatch,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::DegenerateConfiguration: return "degenerate-configuration";
    case ErrorCode::EmptyCloud: return "empty-cloud";
    case ErrorCode::TooFewPoints: return "too-few-points";
    case ErrorCode::CoincidentPoints: return "coincident-points";
    case ErrorCode::IoError: return "io-error";
    case ErrorCode::FormatVersionMismatch: return "format-version-mismatch";
    case ErrorCode::AllPixelsInvalid: return "all-pixels-invalid";
    case ErrorCode::ClassSetMismatch: return "class-set-mismatch";
    case ErrorCode::UnknownClass: return "unknown-class";
    case ErrorCode::InsufficientSupport: return "insufficient-support";
    case ErrorCode::NoHypothesisFound: return "no-hypothesis-found";
    case ErrorCode::InsufficientOverlap: return "insufficient-overlap";
    case ErrorCode::NotVisible: return "not-visible";
    case ErrorCode::ObjectOutOfFrustum: return "object-out-of-frustum";
    case ErrorCode::KTooLarge: return "k-too-large";
    case ErrorCode::DimensionMismatch: return "dimension-mismatch";
  }
  return "unknown";
}

/// Every failure raised by the library carries one of the codes above, so
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace stocs
