#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tabtune {

enum class ErrorCode {
  // datamodel
  MissingTargetColumn,
  RaggedRow,
  EmptyFile,
  SingleClassTarget,
  MissingTargetValue,
  BadNumericCell,
  UnknownClassLabel,
  DegenerateSplit,
  // preprocess
  EmptyTrainingSet,
  SchemaMismatch,
  // resample
  TooFewMinoritySamples,
  DegenerateAfterCleaning,
  // tensorcore
  ShapeMismatch,
  AllMasked,
  NonFiniteValue,
  NoTape,
  // models / tuning
  TooManyClasses,
  EmptySupport,
  UnknownModel,
  UnsupportedStrategy,
  InfeasibleEpisode,
  AllBatchesSkipped,
  // metrics
  LengthMismatch,
  SingleGroup,
  NoPositiveClassInData,
  // pipeline
  NotFitted,
  BadMagic,
  VersionUnsupported,
  ChecksumMismatch,
  TruncatedFile,
  // leaderboard
  MetricUnavailable,
  EmptySuite,
  AllRunsFailed,
  // configuration and I/O
  InvalidConfig,
  IoError,
  InvalidArgument,
};

/// Coarse grouping used to pick process exit codes in the CLI.
enum class ErrorCategory { Usage, Data, Training };

std::string_view error_code_name(ErrorCode code) noexcept;
ErrorCategory error_category(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail);

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return error_category(code_); }

 private:
  ErrorCode code_;
};

[[noreturn]] void raise(ErrorCode code, const std::string& detail = {});

}  // namespace tabtune
