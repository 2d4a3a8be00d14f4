#pragma once

#include <stdexcept>
#include <string>

namespace salab {

enum class ErrorCode {
  NotIrreducible,
  PeriodicChain,
  DimensionMismatch,
  InvalidRate,
  EnvelopeFailure,
  NonFiniteIterate,
  InfiniteAlphabet,
  NotHurwitz,
  SolveSingular,
  CapExceeded,
  BracketFailure,
  DeltaTooLarge,
  StepsizeTooLarge,
  IndexOutOfRange,
  NoConvergence,
  ParseError,
  ValidationError,
};

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotIrreducible: return "NotIrreducible";
    case ErrorCode::PeriodicChain: return "PeriodicChain";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidRate: return "InvalidRate";
    case ErrorCode::EnvelopeFailure: return "EnvelopeFailure";
    case ErrorCode::NonFiniteIterate: return "NonFiniteIterate";
    case ErrorCode::InfiniteAlphabet: return "InfiniteAlphabet";
    case ErrorCode::NotHurwitz: return "NotHurwitz";
    case ErrorCode::SolveSingular: return "SolveSingular";
    case ErrorCode::CapExceeded: return "CapExceeded";
    case ErrorCode::BracketFailure: return "BracketFailure";
    case ErrorCode::DeltaTooLarge: return "DeltaTooLarge";
    case ErrorCode::StepsizeTooLarge: return "StepsizeTooLarge";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
  }
  return "UnknownError";
}

class SaError : public std::runtime_error {
 public:
  SaError(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw SaError(code, what);
}

}  // namespace salab
