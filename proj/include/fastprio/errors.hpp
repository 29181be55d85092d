#pragma once

#include <stdexcept>
#include <string>

namespace fastprio {

// Root of every error the library throws. The CLI maps ValidationError to
// exit status 2 and everything else to 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IndexError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EmptyInputError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ParameterError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DomainError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ConfigurationError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ConsistencyError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class MissingFileError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ShapeChainError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ProfileError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Runtime failures (exit status 3).
class NumericError : public Error {
 public:
  using Error::Error;
};

class EmptyReferenceSetError : public Error {
 public:
  EmptyReferenceSetError(const std::string& what, std::size_t cls)
      : Error(what), class_index_(cls) {}
  std::size_t class_index() const noexcept { return class_index_; }

 private:
  std::size_t class_index_;
};

// APFD / TRC on a suite without faults.
class NotApplicableError : public Error {
 public:
  using Error::Error;
};

}  // namespace fastprio
