#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pann {

enum class ErrorCode : std::uint8_t {
  kInvalidSpec,
  kInvalidPartialSet,
  kInvalidConfig,
  kEmptyInput,
  kInvalidArch,
  kNumericInput,
  kGradientShape,
  kDivergedTraining,
  kDivergedDuals,
  kLabelRange,
  kPseudoCoverage,
  kEmptyMarginal,
  kDomain,
  kIllegalDual,
  kShape,
  kUndefinedDistance,
  // File-format errors.
  kMagicMismatch,
  kVersionMismatch,
  kTruncated,
  kLengthMismatch,
  kArchMismatch,
  kMissingSample,
  kManifestMismatch,
  kIo,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries a code so callers (the CLI in
// particular) can map it onto an exit status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  bool is_format_error() const noexcept {
    return code_ >= ErrorCode::kMagicMismatch;
  }

 private:
  ErrorCode code_;
};

class DivergedTrainingError : public Error {
 public:
  DivergedTrainingError(std::int64_t iteration, const std::string& what)
      : Error(ErrorCode::kDivergedTraining,
              "training diverged at iteration " + std::to_string(iteration) +
                  ": " + what),
        iteration_(iteration) {}

  std::int64_t iteration() const noexcept { return iteration_; }

 private:
  std::int64_t iteration_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace pann
