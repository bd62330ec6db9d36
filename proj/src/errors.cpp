#include "crossdiff/errors.hpp"

namespace crossdiff {

std::string_view category_name(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kParse: return "parse";
    case ErrorCategory::kValidation: return "validation";
    case ErrorCategory::kConfig: return "config";
    case ErrorCategory::kState: return "state";
    case ErrorCategory::kDependency: return "dependency";
    case ErrorCategory::kDegenerateSplit: return "degenerate-split";
    case ErrorCategory::kIo: return "io";
  }
  return "unknown";
}

}  // namespace crossdiff
