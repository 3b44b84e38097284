#pragma once

#include <stdexcept>
#include <string>

namespace mdfn {

enum class ErrorCode {
  EmptyContext,
  EmptyCandidate,
  ShapeError,
  ConfigError,
  IoError,
  SchemaError,
  HeaderMismatch,
  MetricError,
  StaleGraph,
  DegenerateRow,
  NanGradient,
  OverlongSequence,
};

class MdfnError : public std::runtime_error {
 public:
  MdfnError(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::EmptyContext: return "EmptyContext";
    case ErrorCode::EmptyCandidate: return "EmptyCandidate";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::HeaderMismatch: return "HeaderMismatch";
    case ErrorCode::MetricError: return "MetricError";
    case ErrorCode::StaleGraph: return "StaleGraph";
    case ErrorCode::DegenerateRow: return "DegenerateRow";
    case ErrorCode::NanGradient: return "NanGradient";
    case ErrorCode::OverlongSequence: return "OverlongSequence";
  }
  return "Unknown";
}

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw MdfnError(code, std::string(error_code_name(code)) + ": " + what);
}

}  // namespace mdfn
