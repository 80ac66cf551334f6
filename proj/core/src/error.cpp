#include "tabtune/error.hpp"

namespace tabtune {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MissingTargetColumn: return "MissingTargetColumn";
    case ErrorCode::RaggedRow: return "RaggedRow";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::SingleClassTarget: return "SingleClassTarget";
    case ErrorCode::MissingTargetValue: return "MissingTargetValue";
    case ErrorCode::BadNumericCell: return "BadNumericCell";
    case ErrorCode::UnknownClassLabel: return "UnknownClassLabel";
    case ErrorCode::DegenerateSplit: return "DegenerateSplit";
    case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::TooFewMinoritySamples: return "TooFewMinoritySamples";
    case ErrorCode::DegenerateAfterCleaning: return "DegenerateAfterCleaning";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::AllMasked: return "AllMasked";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::NoTape: return "NoTape";
    case ErrorCode::TooManyClasses: return "TooManyClasses";
    case ErrorCode::EmptySupport: return "EmptySupport";
    case ErrorCode::UnknownModel: return "UnknownModel";
    case ErrorCode::UnsupportedStrategy: return "UnsupportedStrategy";
    case ErrorCode::InfeasibleEpisode: return "InfeasibleEpisode";
    case ErrorCode::AllBatchesSkipped: return "AllBatchesSkipped";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::SingleGroup: return "SingleGroup";
    case ErrorCode::NoPositiveClassInData: return "NoPositiveClassInData";
    case ErrorCode::NotFitted: return "NotFitted";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::MetricUnavailable: return "MetricUnavailable";
    case ErrorCode::EmptySuite: return "EmptySuite";
    case ErrorCode::AllRunsFailed: return "AllRunsFailed";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

ErrorCategory error_category(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::UnknownModel:
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidArgument:
      return ErrorCategory::Usage;
    case ErrorCode::TooManyClasses:
    case ErrorCode::EmptySupport:
    case ErrorCode::UnsupportedStrategy:
    case ErrorCode::InfeasibleEpisode:
    case ErrorCode::AllBatchesSkipped:
    case ErrorCode::NonFiniteValue:
    case ErrorCode::ShapeMismatch:
    case ErrorCode::AllMasked:
    case ErrorCode::NoTape:
    case ErrorCode::AllRunsFailed:
    case ErrorCode::MetricUnavailable:
      return ErrorCategory::Training;
    default:
      return ErrorCategory::Data;
  }
}

namespace {
std::string format_message(ErrorCode code, const std::string& detail) {
  std::string msg(error_code_name(code));
  if (!detail.empty()) {
    msg += ": ";
    msg += detail;
  }
  return msg;
}
}  // namespace

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(format_message(code, detail)), code_(code) {}

void raise(ErrorCode code, const std::string& detail) { throw Error(code, detail); }

}  // namespace tabtune
