#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace csislab {

enum class ErrorCode {
  ImageTooSmall,
  DecodeFailure,
  LengthMismatch,
  EmptyInput,
  EmptyDatabase,
  InvalidArgument,
  UnreachableTarget,
  InsufficientDistinctHashes,
  InsufficientImages,
  PoolExhausted,
  TargetLengthMismatch,
  FormatError,
  IoError,
};

inline std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::DecodeFailure: return "DecodeFailure";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::EmptyDatabase: return "EmptyDatabase";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::UnreachableTarget: return "UnreachableTarget";
    case ErrorCode::InsufficientDistinctHashes: return "InsufficientDistinctHashes";
    case ErrorCode::InsufficientImages: return "InsufficientImages";
    case ErrorCode::PoolExhausted: return "PoolExhausted";
    case ErrorCode::TargetLengthMismatch: return "TargetLengthMismatch";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Exception carrying a machine-readable code next to the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) throw Error(code, what);
}

}  // namespace csislab
