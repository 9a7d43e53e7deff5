#pragma once

#include <stdexcept>
#include <string>

namespace grasscat {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: schema, record, data file, model file, or enumeration cap.
/// The CLI maps these to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: singular parameters, zero-probability conditioning,
/// failed positivity. The CLI maps these to exit code 2.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class RangeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class InvalidStateError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IngestError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EnumerationError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ParameterError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ConditioningError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DegenerateError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class PositivityError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace grasscat
