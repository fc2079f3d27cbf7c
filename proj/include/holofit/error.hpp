#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace holofit {

enum class ErrorKind {
  Io,
  ParseError,
  LayoutError,
  ModelMismatch,
  DegenerateRotation,
  BehindCamera,
  InvalidInterval,
  DegenerateBone,
  DegenerateHull,
  LimitsIncomplete,
  NotDescent,
  NoTrace,
  InitMismatch,
  InvalidConfig,
  EmptyCodebook,
  ShapeError,
  BadIndex,
  BadSequence,
  TooFewSamples,
  MissingPrompt,
  MissingPositive,
  EmptySequence,
  EmptySubset,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io: return "Io";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::LayoutError: return "LayoutError";
    case ErrorKind::ModelMismatch: return "ModelMismatch";
    case ErrorKind::DegenerateRotation: return "DegenerateRotation";
    case ErrorKind::BehindCamera: return "BehindCamera";
    case ErrorKind::InvalidInterval: return "InvalidInterval";
    case ErrorKind::DegenerateBone: return "DegenerateBone";
    case ErrorKind::DegenerateHull: return "DegenerateHull";
    case ErrorKind::LimitsIncomplete: return "LimitsIncomplete";
    case ErrorKind::NotDescent: return "NotDescent";
    case ErrorKind::NoTrace: return "NoTrace";
    case ErrorKind::InitMismatch: return "InitMismatch";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::EmptyCodebook: return "EmptyCodebook";
    case ErrorKind::ShapeError: return "ShapeError";
    case ErrorKind::BadIndex: return "BadIndex";
    case ErrorKind::BadSequence: return "BadSequence";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::MissingPrompt: return "MissingPrompt";
    case ErrorKind::MissingPositive: return "MissingPositive";
    case ErrorKind::EmptySequence: return "EmptySequence";
    case ErrorKind::EmptySubset: return "EmptySubset";
  }
  return "Unknown";
}

/// Every failure raised by the library. `kind()` is stable and meant for
/// programmatic dispatch; `what()` carries the human-readable context.
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

}  // namespace holofit
