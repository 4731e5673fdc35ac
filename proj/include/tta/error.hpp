#pragma once

#include <stdexcept>
#include <string>

namespace tta {

enum class ErrorCode {
  kInvalidArgument,
  kDimensionMismatch,
  kNumerical,
  kIo,
  kFormat,
};

const char* to_string(ErrorCode code);

// Every failure the library reports is an Error carrying a code, so callers
// (the CLI in particular) can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace tta
