#pragma once

#include <stdexcept>
#include <string>

namespace mbias {

// Input shape or content problems. Maps to CLI exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension mismatch between tables or parameter blocks.
class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Non-finite or out-of-domain parameter values.
class DomainError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Optimizer could not produce an acceptable answer. Exit code 3.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bootstrap or testing failure. Exit code 4.
class InferenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mbias
