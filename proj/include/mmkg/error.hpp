#pragma once

#include <stdexcept>
#include <string>

namespace mmkg {

enum class ErrorCode {
  kIo = 1,
  kParse,
  kInvalidArgument,
  kNotFound,
  kNumeric,
  kConfig,
};

const char* to_string(ErrorCode code);

// Every failure raised by the core library. The C API maps `code()` onto
// its status enum one-to-one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace mmkg
