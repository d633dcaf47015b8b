#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace volseg {

enum class ErrorCode {
  MissingFile,
  MalformedSidecar,
  SizeMismatch,
  ReadFailure,
  WriteFailure,
  LabelOverflow,
  EmptyStream,
  InvalidK,
  InvalidThreshold,
  InvalidStrategy,
  OutOfRange,
  InvalidM,
  TooFewPoints,
  InsufficientSample,
  LengthMismatch,
  TooFewItems,
  EmptyInput,
  InvalidFractions,
  InvalidArgument,
  MalformedFile,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::MalformedSidecar: return "MalformedSidecar";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::ReadFailure: return "ReadFailure";
    case ErrorCode::WriteFailure: return "WriteFailure";
    case ErrorCode::LabelOverflow: return "LabelOverflow";
    case ErrorCode::EmptyStream: return "EmptyStream";
    case ErrorCode::InvalidK: return "InvalidK";
    case ErrorCode::InvalidThreshold: return "InvalidThreshold";
    case ErrorCode::InvalidStrategy: return "InvalidStrategy";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::InvalidM: return "InvalidM";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::InsufficientSample: return "InsufficientSample";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::TooFewItems: return "TooFewItems";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidFractions: return "InvalidFractions";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MalformedFile: return "MalformedFile";
  }
  return "Unknown";
}

// Errors caused by bad parameters rather than bad data or I/O. The CLI maps
// these to the usage exit code.
constexpr bool is_usage_error(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidK:
    case ErrorCode::InvalidThreshold:
    case ErrorCode::InvalidStrategy:
    case ErrorCode::InvalidM:
    case ErrorCode::InvalidArgument:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace volseg
