#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tpp {

enum class ErrorCode {
  MissingFile,
  SchemaMismatch,
  NonMonotoneTimestamps,
  TypeOutOfRange,
  BadRatios,
  EmptyBatch,
  EmptyDataset,
  TimeBeforeHistory,
  ZeroIntensityAtEvent,
  ExplosiveParams,
  InvalidParams,
  ShapeMismatch,
  DomainError,
  NonScalarLoss,
  TapeConsumed,
  SampleTimeBeforeAnchor,
  MaxRoundsExceeded,
  AllDrawsCensored,
  NoEvents,
  TooLarge,
  DivergedLoss,
  IncompatibleCheckpoint,
  BadConfig,
  NotSupported,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; callers switch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace tpp
