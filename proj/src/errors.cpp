#include "duopoly/errors.hpp"

namespace duopoly {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::UndefinedEquilibrium: return "UndefinedEquilibrium";
    case ErrorCode::UndefinedCartel: return "UndefinedCartel";
    case ErrorCode::UnsupportedMode: return "UnsupportedMode";
    case ErrorCode::InsufficientHistory: return "InsufficientHistory";
    case ErrorCode::UndefinedRange: return "UndefinedRange";
    case ErrorCode::EmptyStrategy: return "EmptyStrategy";
    case ErrorCode::PolicyFailure: return "PolicyFailure";
    case ErrorCode::MissingVariable: return "MissingVariable";
    case ErrorCode::NoPriceFound: return "NoPriceFound";
    case ErrorCode::AuthMissing: return "AuthMissing";
    case ErrorCode::ProviderError: return "ProviderError";
    case ErrorCode::CassetteMismatch: return "CassetteMismatch";
    case ErrorCode::CassetteExhausted: return "CassetteExhausted";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::RunDirLocked: return "RunDirLocked";
    case ErrorCode::MalformedLog: return "MalformedLog";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message,
             std::optional<ErrorCode> cause)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code),
      cause_(cause) {}

}  // namespace duopoly
