#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tempdens {

enum class ErrorCode {
  kInvalidArgument,
  kParse,
  kSizeMismatch,
  kNonFinite,
  kShape,
  kPrecondition,
  kSingular,
  kZeroVariance,
  kOrder,
  kIo,
  kUnknownName,
  kMissingStatistic,
  kUntrained,
  kEmpty,
  kConfig,
};

/// Stable machine-readable name, used in error JSON emitted by the CLI.
std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace tempdens
