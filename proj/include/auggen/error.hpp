#pragma once

#include <stdexcept>
#include <string>

namespace auggen {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents disagree with what an operation expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf observed, or training diverged.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& where, const std::string& what)
      : Error(where + ": " + what), where_(where) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

// Caller supplied an invalid argument or configuration.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Persisted artifact is malformed or has an unexpected version.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace auggen
