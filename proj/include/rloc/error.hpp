#pragma once

#include <stdexcept>
#include <string>

namespace rloc {

/// Error category, mapped to CLI exit codes (config=2, precondition=3,
/// runtime=4).
enum class ErrorKind { Config, Precondition, Runtime };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error config_error(const std::string& msg) {
  return Error(ErrorKind::Config, msg);
}
inline Error precondition_error(const std::string& msg) {
  return Error(ErrorKind::Precondition, msg);
}
inline Error runtime_failure(const std::string& msg) {
  return Error(ErrorKind::Runtime, msg);
}

}  // namespace rloc
