#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cyborg {

enum class ErrorKind {
  EmptyInput,
  ShapeMismatch,
  NonBinary,
  NoSurvivingFixations,
  InvalidFixation,
  OutOfBounds,
  MissingFile,
  SchemaError,
  DanglingPath,
  IndexOutOfRange,
  NonFinite,
  MissingSaliency,
  EmptySplit,
  GridMismatch,
  UnreadableMask,
  ConfigInvalid,
  SourceExhausted,
  SingleClass,
  NoPositives,
  InsufficientPoints,
  InvalidMap,
  Io,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonBinary: return "NonBinary";
    case ErrorKind::NoSurvivingFixations: return "NoSurvivingFixations";
    case ErrorKind::InvalidFixation: return "InvalidFixation";
    case ErrorKind::OutOfBounds: return "OutOfBounds";
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::DanglingPath: return "DanglingPath";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::MissingSaliency: return "MissingSaliency";
    case ErrorKind::EmptySplit: return "EmptySplit";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::UnreadableMask: return "UnreadableMask";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::SourceExhausted: return "SourceExhausted";
    case ErrorKind::SingleClass: return "SingleClass";
    case ErrorKind::NoPositives: return "NoPositives";
    case ErrorKind::InsufficientPoints: return "InsufficientPoints";
    case ErrorKind::InvalidMap: return "InvalidMap";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure in the library surfaces as this exception; `kind()` is the
/// machine-readable part, the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& detail) { throw Error(kind, detail); }

}  // namespace cyborg
