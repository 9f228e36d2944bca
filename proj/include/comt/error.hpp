#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace comt {

enum class ErrorCode {
  kInvalidArgument,
  kDimensionMismatch,
  kLabelDomainError,
  kEmptyTrustedSet,
  kInsufficientData,
  kDomainError,
  kDegenerateInput,
  kDegenerateState,
  kNonFiniteIterate,
  kParseError,
  kIndexError,
  kIoError,
};

std::string_view to_string(ErrorCode code);

// All library failures surface as this exception; code() identifies the
// failure class so callers and tests can branch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace comt
