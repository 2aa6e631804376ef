#include "msaf/error.hpp"

namespace msaf {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingSidecar: return "MissingSidecar";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::NonFiniteData: return "NonFiniteData";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::UnknownChannel: return "UnknownChannel";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvalidBand: return "InvalidBand";
    case ErrorCode::RateMismatch: return "RateMismatch";
    case ErrorCode::DegenerateChannel: return "DegenerateChannel";
    case ErrorCode::InsufficientChannels: return "InsufficientChannels";
    case ErrorCode::EmptyCrop: return "EmptyCrop";
    case ErrorCode::InvalidRate: return "InvalidRate";
    case ErrorCode::NoPeaks: return "NoPeaks";
    case ErrorCode::DegenerateMap: return "DegenerateMap";
    case ErrorCode::EmptyCluster: return "EmptyCluster";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::ZeroGfp: return "ZeroGfp";
    case ErrorCode::MontageMismatch: return "MontageMismatch";
    case ErrorCode::DegenerateSample: return "DegenerateSample";
    case ErrorCode::AmbiguousLabels: return "AmbiguousLabels";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::InconsistentStates: return "InconsistentStates";
    case ErrorCode::DuplicateSubject: return "DuplicateSubject";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::TooFewSamplesForValidation: return "TooFewSamplesForValidation";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ClassTooSmall: return "ClassTooSmall";
    case ErrorCode::TooManyFeatures: return "TooManyFeatures";
    case ErrorCode::EmptyBackground: return "EmptyBackground";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::UnsupportedModel: return "UnsupportedModel";
    case ErrorCode::SampleSizeOutOfRange: return "SampleSizeOutOfRange";
    case ErrorCode::ConstantSample: return "ConstantSample";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::TooFewGroups: return "TooFewGroups";
    case ErrorCode::InvalidDomain: return "InvalidDomain";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

ErrorCategory category_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidBand:
    case ErrorCode::InvalidRate:
    case ErrorCode::UnknownChannel:
    case ErrorCode::RateMismatch:
    case ErrorCode::TooManyFeatures:
    case ErrorCode::UnsupportedModel:
    case ErrorCode::MissingSidecar:
    case ErrorCode::ParseError:
      return ErrorCategory::Config;
    case ErrorCode::EmptyCluster:
    case ErrorCode::SingularSystem:
    case ErrorCode::NonFinite:
    case ErrorCode::ZeroGfp:
    case ErrorCode::InvalidDomain:
      return ErrorCategory::Numeric;
    default:
      return ErrorCategory::Data;
  }
}

}  // namespace msaf
