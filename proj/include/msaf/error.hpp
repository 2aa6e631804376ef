#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace msaf {

enum class ErrorCode {
  // io
  MissingSidecar,
  ShapeMismatch,
  BadMagic,
  NonFiniteData,
  IoFailure,
  UnknownChannel,
  ParseError,
  // preprocess
  InvalidBand,
  RateMismatch,
  DegenerateChannel,
  InsufficientChannels,
  EmptyCrop,
  InvalidRate,
  // microstates
  NoPeaks,
  DegenerateMap,
  EmptyCluster,
  TooFewSamples,
  ZeroGfp,
  MontageMismatch,
  DegenerateSample,
  AmbiguousLabels,
  // features
  TooShort,
  InconsistentStates,
  DuplicateSubject,
  // models
  SingleClass,
  NonFinite,
  TooFewSamplesForValidation,
  DimensionMismatch,
  LengthMismatch,
  ClassTooSmall,
  // explain
  TooManyFeatures,
  EmptyBackground,
  SingularSystem,
  UnsupportedModel,
  // stats
  SampleSizeOutOfRange,
  ConstantSample,
  DegenerateData,
  TooFewGroups,
  InvalidDomain,
  // config
  InvalidConfig,
};

std::string_view to_string(ErrorCode code);

/// Broad failure class, used by the CLI to pick an exit code.
enum class ErrorCategory { Config, Data, Numeric };

ErrorCategory category_of(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace msaf
