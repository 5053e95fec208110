#pragma once

#include <stdexcept>
#include <string>

namespace skydehaze {

enum class ErrorKind {
  kInvalidArgument,  // bad parameter or mismatched dimensions
  kDecode,           // malformed or truncated image / checkpoint bytes
  kIo,               // file could not be read or written
  kNumeric,          // NaN or other numeric failure
};

// Single exception type for the library; the kind drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_invalid(const std::string& message) {
  throw Error(ErrorKind::kInvalidArgument, message);
}

}  // namespace skydehaze
