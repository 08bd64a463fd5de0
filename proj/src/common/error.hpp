#pragma once

#include <stdexcept>
#include <string>

namespace crlab {

// Numeric values double as CLI exit codes.
enum class ErrorKind : int {
  kUsage = 1,
  kConfig = 2,
  kNumeric = 3,
  kIo = 4,
  kAccess = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_usage(const std::string& msg) {
  throw Error(ErrorKind::kUsage, msg);
}
[[noreturn]] inline void throw_config(const std::string& msg) {
  throw Error(ErrorKind::kConfig, msg);
}
[[noreturn]] inline void throw_numeric(const std::string& msg) {
  throw Error(ErrorKind::kNumeric, msg);
}
[[noreturn]] inline void throw_io(const std::string& msg) {
  throw Error(ErrorKind::kIo, msg);
}
[[noreturn]] inline void throw_access(const std::string& msg) {
  throw Error(ErrorKind::kAccess, msg);
}

}  // namespace crlab
