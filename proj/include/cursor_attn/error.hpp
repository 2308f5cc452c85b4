#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cursor_attn {

enum class ErrorKind {
  MalformedInput,
  InvalidValue,
  EmptyClass,
  ShapeMismatch,
  EmptySet,
  EmptySpace,
  Divergence,
  SingleClass,
  TooFewPairs,
  AllZeroDifferences,
  TooFewTreatments,
  TooFewReports,
  MissingAdBox,
  IOFailure,
};

inline std::string_view kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedInput: return "MalformedInput";
    case ErrorKind::InvalidValue: return "InvalidValue";
    case ErrorKind::EmptyClass: return "EmptyClass";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::EmptySet: return "EmptySet";
    case ErrorKind::EmptySpace: return "EmptySpace";
    case ErrorKind::Divergence: return "Divergence";
    case ErrorKind::SingleClass: return "SingleClass";
    case ErrorKind::TooFewPairs: return "TooFewPairs";
    case ErrorKind::AllZeroDifferences: return "AllZeroDifferences";
    case ErrorKind::TooFewTreatments: return "TooFewTreatments";
    case ErrorKind::TooFewReports: return "TooFewReports";
    case ErrorKind::MissingAdBox: return "MissingAdBox";
    case ErrorKind::IOFailure: return "IOFailure";
  }
  return "Unknown";
}

// Every failure surfaced by the library carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace cursor_attn
