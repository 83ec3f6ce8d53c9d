#include "tempdens/error.hpp"

namespace tempdens {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kParse: return "parse_error";
    case ErrorCode::kSizeMismatch: return "size_mismatch";
    case ErrorCode::kNonFinite: return "non_finite";
    case ErrorCode::kShape: return "shape_mismatch";
    case ErrorCode::kPrecondition: return "precondition";
    case ErrorCode::kSingular: return "singular";
    case ErrorCode::kZeroVariance: return "zero_variance";
    case ErrorCode::kOrder: return "out_of_order";
    case ErrorCode::kIo: return "io_error";
    case ErrorCode::kUnknownName: return "unknown_name";
    case ErrorCode::kMissingStatistic: return "missing_statistic";
    case ErrorCode::kUntrained: return "untrained_model";
    case ErrorCode::kEmpty: return "empty_input";
    case ErrorCode::kConfig: return "config_error";
  }
  return "unknown";
}

}  // namespace tempdens
