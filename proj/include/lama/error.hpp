#pragma once

#include <stdexcept>
#include <string>

namespace lama {

enum class ErrorKind {
  InvalidArgument,
  OpenPageViolation,
  MissingAnnotation,
  BufferOverflow,
  OperandOutOfDomain,
  UnsupportedPrecision,
  DegenerateInput,
  LengthMismatch,
  BaseMismatch,
  CounterOverflow,
  CapacityExceeded,
  InsufficientChannels,
  OracleMismatch,
  ParseError,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::OpenPageViolation: return "open-page-violation";
    case ErrorKind::MissingAnnotation: return "missing-annotation";
    case ErrorKind::BufferOverflow: return "buffer-overflow";
    case ErrorKind::OperandOutOfDomain: return "operand-out-of-domain";
    case ErrorKind::UnsupportedPrecision: return "unsupported-precision";
    case ErrorKind::DegenerateInput: return "degenerate-input";
    case ErrorKind::LengthMismatch: return "length-mismatch";
    case ErrorKind::BaseMismatch: return "base-mismatch";
    case ErrorKind::CounterOverflow: return "counter-overflow";
    case ErrorKind::CapacityExceeded: return "capacity-exceeded";
    case ErrorKind::InsufficientChannels: return "insufficient-channels";
    case ErrorKind::OracleMismatch: return "oracle-mismatch";
    case ErrorKind::ParseError: return "parse-error";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace lama
