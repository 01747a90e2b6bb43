#pragma once

#include <stdexcept>
#include <string>

namespace sdm {

enum class ErrorCode {
  InvalidArgument = 1,
  Io = 2,
  Corrupt = 3,
  HashMismatch = 4,
  Shape = 5,
  NoFrames = 6,
  Diverged = 7,
  Stage = 8,
  CountMismatch = 9,
  Internal = 99,
};

// Every failure raised by the core carries one of the codes above; the C API
// maps them one-to-one onto sdm_status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace sdm
