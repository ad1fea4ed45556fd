#pragma once

#include <stdexcept>
#include <string>

namespace teach {

using ItemIndex = int;
using ClassIndex = int;

enum class ErrorKind {
  InvalidInput,
  NotFound,
  WrongPhase,
  Conflict,
  Numerical,
  Io,
};

/// All library failures are reported as TeachError; kind() lets callers
/// (the HTTP facade, the CLI) map a failure onto their own error codes.
class TeachError : public std::runtime_error {
 public:
  TeachError(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace teach
