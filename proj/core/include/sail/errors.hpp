#pragma once

#include <stdexcept>
#include <string>

namespace sail {

// Error categories double as process exit codes for the command-line tool.
enum class ErrorKind : int {
  usage = 2,
  data = 3,
  numeric = 4,
  service = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

/// Invalid configuration or arguments.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

/// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

/// A file ended early or its layout does not parse.
class CorruptFileError : public DataError {
 public:
  using DataError::DataError;
};

/// A file carries a format version this build does not understand.
class VersionError : public DataError {
 public:
  using DataError::DataError;
};

/// Non-finite values during optimization.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

/// Chat-completion transport failures or unusable model output.
class ServiceError : public Error {
 public:
  explicit ServiceError(const std::string& what) : Error(ErrorKind::service, what) {}
};

}  // namespace sail
