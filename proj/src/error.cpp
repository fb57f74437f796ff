#include "tpp/error.hpp"

namespace tpp {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::NonMonotoneTimestamps: return "NonMonotoneTimestamps";
    case ErrorCode::TypeOutOfRange: return "TypeOutOfRange";
    case ErrorCode::BadRatios: return "BadRatios";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::TimeBeforeHistory: return "TimeBeforeHistory";
    case ErrorCode::ZeroIntensityAtEvent: return "ZeroIntensityAtEvent";
    case ErrorCode::ExplosiveParams: return "ExplosiveParams";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::NonScalarLoss: return "NonScalarLoss";
    case ErrorCode::TapeConsumed: return "TapeConsumed";
    case ErrorCode::SampleTimeBeforeAnchor: return "SampleTimeBeforeAnchor";
    case ErrorCode::MaxRoundsExceeded: return "MaxRoundsExceeded";
    case ErrorCode::AllDrawsCensored: return "AllDrawsCensored";
    case ErrorCode::NoEvents: return "NoEvents";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::IncompatibleCheckpoint: return "IncompatibleCheckpoint";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::NotSupported: return "NotSupported";
  }
  return "Unknown";
}

}  // namespace tpp
