#ifndef SKIPFUSE_ERROR_HPP_
#define SKIPFUSE_ERROR_HPP_

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace skipfuse {

enum class ErrorCode {
  DimensionMismatch,
  NonSquare,
  SingularMatrix,
  ShapeMismatch,
  NonFinite,
  InvalidConfig,
  TokenOutOfRange,
  ApplicabilityError,
  ConfigMismatch,
  IoFailure,
  BadMagic,
  CorruptHeader,
  TruncatedPayload,
  InconsistentForm,
  UnknownKey,
  MissingKey,
  InvalidValue,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonSquare: return "NonSquare";
    case ErrorCode::SingularMatrix: return "SingularMatrix";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::TokenOutOfRange: return "TokenOutOfRange";
    case ErrorCode::ApplicabilityError: return "ApplicabilityError";
    case ErrorCode::ConfigMismatch: return "ConfigMismatch";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::CorruptHeader: return "CorruptHeader";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::InconsistentForm: return "InconsistentForm";
    case ErrorCode::UnknownKey: return "UnknownKey";
    case ErrorCode::MissingKey: return "MissingKey";
    case ErrorCode::InvalidValue: return "InvalidValue";
  }
  return "Unknown";
}

/// Every failure in the library is reported through this exception. The
/// code identifies the failure class; `block()` is set when the failure can
/// be attributed to one transformer block (0-based, matching `blk{i}` names).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what,
        std::optional<std::size_t> block = std::nullopt)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code),
        message_(what),
        block_(block) {}

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> block() const noexcept { return block_; }
  /// what() without the error-code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
  std::optional<std::size_t> block_;
};

}  // namespace skipfuse

#endif  // SKIPFUSE_ERROR_HPP_
