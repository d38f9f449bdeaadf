#pragma once

#include <stdexcept>
#include <string>

namespace buildiff {

// Exit-code taxonomy shared by the library and the CLI.
enum class ErrorKind {
  kInternal = 1,
  kDependency = 2,
  kInput = 3,
  kDataMismatch = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// A required earlier pipeline stage (checkpoint) is missing.
class DependencyError : public Error {
 public:
  explicit DependencyError(const std::string& what)
      : Error(ErrorKind::kDependency, what) {}
};

// Unreadable or malformed input file.
class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ErrorKind::kInput, what) {}
};

class DataMismatchError : public Error {
 public:
  explicit DataMismatchError(const std::string& what)
      : Error(ErrorKind::kDataMismatch, what) {}
};

// Numerical breakdown (NaN/Inf) during a forward pass, training or sampling.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what)
      : Error(ErrorKind::kInternal, what) {}
};

}  // namespace buildiff
