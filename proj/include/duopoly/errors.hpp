#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace duopoly {

enum class ErrorCode {
  InvalidParams,
  UndefinedEquilibrium,
  UndefinedCartel,
  UnsupportedMode,
  InsufficientHistory,
  UndefinedRange,
  EmptyStrategy,
  PolicyFailure,
  MissingVariable,
  NoPriceFound,
  AuthMissing,
  ProviderError,
  CassetteMismatch,
  CassetteExhausted,
  ConfigError,
  ChecksumMismatch,
  VersionMismatch,
  IoError,
  RunDirLocked,
  MalformedLog,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library. `code()` identifies the failure;
/// `cause()` is set when one failure wraps another (PolicyFailure around a
/// provider or cassette error, for instance).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<ErrorCode> cause = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  std::optional<ErrorCode> cause() const noexcept { return cause_; }

 private:
  ErrorCode code_;
  std::optional<ErrorCode> cause_;
};

}  // namespace duopoly
