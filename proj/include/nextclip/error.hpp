#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nextclip {

enum class ErrorCode {
  InvalidConfig,
  InvalidPartition,
  Shape,
  Domain,
  BadMagic,
  VersionMismatch,
  Truncated,
  ConfigMismatch,
  NumericalFailure,
  Io,
  Usage,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig: return "invalid-config";
    case ErrorCode::InvalidPartition: return "invalid-partition";
    case ErrorCode::Shape: return "shape";
    case ErrorCode::Domain: return "domain";
    case ErrorCode::BadMagic: return "bad-magic";
    case ErrorCode::VersionMismatch: return "version-mismatch";
    case ErrorCode::Truncated: return "truncated";
    case ErrorCode::ConfigMismatch: return "config-mismatch";
    case ErrorCode::NumericalFailure: return "numerical-failure";
    case ErrorCode::Io: return "io";
    case ErrorCode::Usage: return "usage";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class NumericalFailure : public Error {
 public:
  NumericalFailure(int layer, const std::string& message)
      : Error(ErrorCode::NumericalFailure, message), layer_(layer) {}

  /// Layer that produced the first non-finite activation; -1 for the
  /// embedding stage, `depth` for the output head.
  int layer() const noexcept { return layer_; }

 private:
  int layer_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace nextclip
