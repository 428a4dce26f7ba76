#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dlm {

enum class ErrorCode {
  // usage / configuration
  ConfigError,
  // data-level failures
  EmptyInput,
  RaggedRows,
  TableTooLarge,
  EmptyBundle,
  BundleTooSmall,
  DimensionMismatch,
  InvalidLabel,
  TargetNotCategorical,
  TooFewRows,
  InvalidSector,
  SpecInvalid,
  AlreadyTooMissing,
  SingleClass,
  PositionMismatch,
  KTooLarge,
  FoldTooSmall,
  ZeroInitialAccuracy,
  CorpusExhausted,
  BadCheckpoint,
  IoFailure,
  // internal assertion failures
  FrozenBaseViolation,
  NonFiniteLoss,
  Internal,
};

const char* error_code_name(ErrorCode code);

// 1 = usage, 2 = data, 3 = internal assertion. Mirrors the CLI exit codes.
int error_code_severity(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::int64_t detail = -1)
      : std::runtime_error(std::move(message)), code_(code), detail_(detail) {}

  ErrorCode code() const { return code_; }
  std::int64_t detail() const { return detail_; }

 private:
  ErrorCode code_;
  std::int64_t detail_;
};

[[noreturn]] inline void throw_error(ErrorCode code, const std::string& message,
                                     std::int64_t detail = -1) {
  throw Error(code, std::string(error_code_name(code)) + ": " + message, detail);
}

inline void require(bool condition, ErrorCode code, const std::string& message,
                    std::int64_t detail = -1) {
  if (!condition) throw_error(code, message, detail);
}

}  // namespace dlm
