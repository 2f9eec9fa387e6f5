#include "pann/error.hpp"

namespace pann {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidSpec: return "invalid-spec";
    case ErrorCode::kInvalidPartialSet: return "invalid-partial-set";
    case ErrorCode::kInvalidConfig: return "invalid-config";
    case ErrorCode::kEmptyInput: return "empty-input";
    case ErrorCode::kInvalidArch: return "invalid-arch";
    case ErrorCode::kNumericInput: return "numeric-input";
    case ErrorCode::kGradientShape: return "gradient-shape";
    case ErrorCode::kDivergedTraining: return "diverged-training";
    case ErrorCode::kDivergedDuals: return "diverged-duals";
    case ErrorCode::kLabelRange: return "label-range";
    case ErrorCode::kPseudoCoverage: return "pseudo-coverage";
    case ErrorCode::kEmptyMarginal: return "empty-marginal";
    case ErrorCode::kDomain: return "domain";
    case ErrorCode::kIllegalDual: return "illegal-dual";
    case ErrorCode::kShape: return "shape";
    case ErrorCode::kUndefinedDistance: return "undefined-distance";
    case ErrorCode::kMagicMismatch: return "magic-mismatch";
    case ErrorCode::kVersionMismatch: return "version-mismatch";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kLengthMismatch: return "length-mismatch";
    case ErrorCode::kArchMismatch: return "arch-mismatch";
    case ErrorCode::kMissingSample: return "missing-sample";
    case ErrorCode::kManifestMismatch: return "manifest-mismatch";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace pann
