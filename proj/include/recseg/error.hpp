#pragma once

#include <stdexcept>
#include <string>

namespace recseg {

// Base error. The category maps onto CLI exit codes.
class Error : public std::runtime_error {
 public:
  enum class Kind { Invalid, Io, Parse, Numeric, Check };

  Error(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& msg) : Error(Kind::Invalid, msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(Kind::Io, msg) {}
};

struct ParseError : Error {
  explicit ParseError(const std::string& msg) : Error(Kind::Parse, msg) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(Kind::Numeric, msg) {}
};

struct CheckFailed : Error {
  explicit CheckFailed(const std::string& msg) : Error(Kind::Check, msg) {}
};

inline const char* kind_name(Error::Kind k) {
  switch (k) {
    case Error::Kind::Invalid: return "invalid";
    case Error::Kind::Io: return "io";
    case Error::Kind::Parse: return "parse";
    case Error::Kind::Numeric: return "numeric";
    case Error::Kind::Check: return "check";
  }
  return "unknown";
}

}  // namespace recseg
