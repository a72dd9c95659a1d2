#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace proxdist {

// Every failure raised by the library is an Error tagged with a stable code.
enum class ErrorCode {
  // corpus
  MalformedLine,
  MissingHeaderField,
  BadHeaderValue,
  ChannelArity,
  NoBluetooth,
  DuplicateId,
  BadDistance,
  MalformedRow,
  // features
  EmptySeries,
  BadPercent,
  BadConfig,
  NonFiniteFeature,
  // radio
  NonPositiveDistance,
  EmptyDataset,
  BadSearchSpace,
  // ensemble
  EmptySet,
  ShapeMismatch,
  SchemaMismatch,
  EmptyGrid,
  BadHyperparams,
  BadModel,
  // scoring
  LengthMismatch,
  EmptyInput,
  MissingPrediction,
  // pipeline / synth / io
  EmptyGrain,
  BadSpec,
  Io,
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::MissingHeaderField: return "MissingHeaderField";
    case ErrorCode::BadHeaderValue: return "BadHeaderValue";
    case ErrorCode::ChannelArity: return "ChannelArity";
    case ErrorCode::NoBluetooth: return "NoBluetooth";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::BadDistance: return "BadDistance";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::EmptySeries: return "EmptySeries";
    case ErrorCode::BadPercent: return "BadPercent";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::NonFiniteFeature: return "NonFiniteFeature";
    case ErrorCode::NonPositiveDistance: return "NonPositiveDistance";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::BadSearchSpace: return "BadSearchSpace";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::EmptyGrid: return "EmptyGrid";
    case ErrorCode::BadHyperparams: return "BadHyperparams";
    case ErrorCode::BadModel: return "BadModel";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::MissingPrediction: return "MissingPrediction";
    case ErrorCode::EmptyGrain: return "EmptyGrain";
    case ErrorCode::BadSpec: return "BadSpec";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Codes that can only come from a bad configuration or flag value.
inline bool is_config_error(ErrorCode c) {
  switch (c) {
    case ErrorCode::BadConfig:
    case ErrorCode::BadPercent:
    case ErrorCode::BadSearchSpace:
    case ErrorCode::BadHyperparams:
    case ErrorCode::EmptyGrid:
    case ErrorCode::BadSpec:
      return true;
    default:
      return false;
  }
}

[[noreturn]] inline void fail(ErrorCode code, const std::string& detail) {
  throw Error(code, detail);
}

}  // namespace proxdist
