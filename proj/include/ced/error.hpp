#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ced {

enum class ErrorCode {
  DimensionMismatch,
  NonFiniteInput,
  FewerSamplesThanK,
  IndexOutOfRange,
  UnknownClass,
  LengthMismatch,
  InvalidConfig,
  MissingWords,
  NoPositiveExamples,
  ParseError,
  IoError,
};

std::string_view to_string(ErrorCode code);

// Everything except I/O failures is a problem with the caller's input.
constexpr bool is_validation(ErrorCode code) { return code != ErrorCode::IoError; }

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace ced
