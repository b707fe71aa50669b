#pragma once

#include <stdexcept>
#include <string>

namespace tcvsr {

enum class ErrorCode {
  InvalidArgument = 1,
  Shape = 2,
  Numeric = 3,
  Io = 4,
  Config = 5,
  State = 6,
  Internal = 7,
};

/// Base of every exception thrown by the library. The code maps 1:1 onto the
/// C API status values.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& m) : Error(ErrorCode::InvalidArgument, m) {}
};
struct ShapeError : Error {
  explicit ShapeError(const std::string& m) : Error(ErrorCode::Shape, m) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& m) : Error(ErrorCode::Numeric, m) {}
};
struct IoError : Error {
  explicit IoError(const std::string& m) : Error(ErrorCode::Io, m) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error(ErrorCode::Config, m) {}
};
struct StateError : Error {
  explicit StateError(const std::string& m) : Error(ErrorCode::State, m) {}
};

}  // namespace tcvsr
