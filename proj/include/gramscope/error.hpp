#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gramscope {

enum class ErrorKind {
  UnreadableFile,
  MalformedTier,
  MalformedAge,
  EmptyInput,
  EmptyCorpus,
  IndexOutOfRange,
  Precondition,
  MissingClass,
  DegenerateData,
  DimensionMismatch,
  MisalignedItems,
  MalformedRecord,
  LengthMismatch,
  InsufficientData,
  TooFewGroups,
  SubsampleTooSmall,
  Separation,
  NonConvergence,
  IoError,
  UnknownChunk,
  UnknownItem,
  InvalidAnnotation,
  QuorumNotReached,
  Usage,
  Invariant,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UnreadableFile: return "UnreadableFile";
    case ErrorKind::MalformedTier: return "MalformedTier";
    case ErrorKind::MalformedAge: return "MalformedAge";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::Precondition: return "Precondition";
    case ErrorKind::MissingClass: return "MissingClass";
    case ErrorKind::DegenerateData: return "DegenerateData";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::MisalignedItems: return "MisalignedItems";
    case ErrorKind::MalformedRecord: return "MalformedRecord";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::TooFewGroups: return "TooFewGroups";
    case ErrorKind::SubsampleTooSmall: return "SubsampleTooSmall";
    case ErrorKind::Separation: return "Separation";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::UnknownChunk: return "UnknownChunk";
    case ErrorKind::UnknownItem: return "UnknownItem";
    case ErrorKind::InvalidAnnotation: return "InvalidAnnotation";
    case ErrorKind::QuorumNotReached: return "QuorumNotReached";
    case ErrorKind::Usage: return "Usage";
    case ErrorKind::Invariant: return "Invariant";
  }
  return "Unknown";
}

/// Every failure in the library is reported as an Error carrying a kind, so
/// callers (the CLI, the HTTP layer) can map it to an exit code or status.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace gramscope
