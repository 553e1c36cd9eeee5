#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace steer {

enum class ErrorCode {
  kInvalidArgument,
  kCorruptFile,
  kUnsupportedVersion,
  kDimensionMismatch,
  kContextOverflow,
  kLayerOutOfRange,
  kDegenerate,
  kInsufficientData,
  kParse,
  kIo,
  kConfig,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kCorruptFile: return "corrupt_file";
    case ErrorCode::kUnsupportedVersion: return "unsupported_version";
    case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
    case ErrorCode::kContextOverflow: return "context_overflow";
    case ErrorCode::kLayerOutOfRange: return "layer_out_of_range";
    case ErrorCode::kDegenerate: return "degenerate";
    case ErrorCode::kInsufficientData: return "insufficient_data";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kConfig: return "config";
  }
  return "unknown";
}

// Every failure raised by the library carries a code so callers (the CLI in
// particular) can map it onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace steer
