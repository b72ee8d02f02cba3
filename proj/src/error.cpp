#include "omc/error.hpp"

namespace omc {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidInput: return "invalid input";
    case ErrorCode::kCorruptBuffer: return "corrupt buffer";
    case ErrorCode::kMissingVariable: return "missing variable";
    case ErrorCode::kCorruptCheckpoint: return "corrupt checkpoint";
    case ErrorCode::kInvalidConfig: return "invalid config";
    case ErrorCode::kSkippedClient: return "skipped client";
    case ErrorCode::kDivergedClient: return "diverged client";
    case ErrorCode::kRoundFailed: return "round failed";
  }
  return "error";
}

}  // namespace omc
