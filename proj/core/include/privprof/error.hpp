#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace privprof {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input file structure does not match the expected schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// A cell holds a value outside its column's domain.
class ValueError : public Error {
 public:
  ValueError(const std::string& message, std::size_t row, std::size_t column)
      : Error(message), row_(row), column_(column) {}

  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

class ConflictError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public TrainingError {
 public:
  DivergenceError(const std::string& message, std::size_t epoch)
      : TrainingError(message), epoch_(epoch) {}

  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

// An exhaustive routine was asked to enumerate too many candidates.
class GuardError : public Error {
 public:
  using Error::Error;
};

}  // namespace privprof
