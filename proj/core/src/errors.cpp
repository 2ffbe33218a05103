#include "xloc/errors.hpp"

namespace xloc {

std::string_view to_string(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kInvalidArgument: return "invalid_argument";
    case ErrorCategory::kInvalidDepth: return "invalid_depth";
    case ErrorCategory::kDegenerate: return "degenerate";
    case ErrorCategory::kPrecondition: return "precondition";
    case ErrorCategory::kNotFound: return "not_found";
    case ErrorCategory::kIo: return "io";
    case ErrorCategory::kSchema: return "schema";
    case ErrorCategory::kVersionMismatch: return "version_mismatch";
    case ErrorCategory::kCorruptStore: return "corrupt_store";
    case ErrorCategory::kTruncatedArray: return "truncated_array";
    case ErrorCategory::kTransport: return "transport";
  }
  return "unknown";
}

Error::Error(ErrorCategory category, const std::string& message)
    : std::runtime_error(std::string(to_string(category)) + ": " + message),
      category_(category) {}

void fail(ErrorCategory category, const std::string& message) {
  throw Error(category, message);
}

}  // namespace xloc
