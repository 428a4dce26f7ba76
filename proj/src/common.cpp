#include "dlm/common.hpp"

namespace dlm {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::RaggedRows: return "RaggedRows";
    case ErrorCode::TableTooLarge: return "TableTooLarge";
    case ErrorCode::EmptyBundle: return "EmptyBundle";
    case ErrorCode::BundleTooSmall: return "BundleTooSmall";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidLabel: return "InvalidLabel";
    case ErrorCode::TargetNotCategorical: return "TargetNotCategorical";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::InvalidSector: return "InvalidSector";
    case ErrorCode::SpecInvalid: return "SpecInvalid";
    case ErrorCode::AlreadyTooMissing: return "AlreadyTooMissing";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::PositionMismatch: return "PositionMismatch";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::FoldTooSmall: return "FoldTooSmall";
    case ErrorCode::ZeroInitialAccuracy: return "ZeroInitialAccuracy";
    case ErrorCode::CorpusExhausted: return "CorpusExhausted";
    case ErrorCode::BadCheckpoint: return "BadCheckpoint";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::FrozenBaseViolation: return "FrozenBaseViolation";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::Internal: return "Internal";
  }
  return "Unknown";
}

int error_code_severity(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
      return 1;
    case ErrorCode::FrozenBaseViolation:
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::Internal:
      return 3;
    default:
      return 2;
  }
}

}  // namespace dlm
