#pragma once

#include <stdexcept>
#include <string>

namespace nshift {

// Root of every error thrown by the library. Callers that only need a message
// can catch this; the subclasses carry structured context.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input that violates a documented precondition (bad dimension, non-positive
// step, malformed word, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Evaluation left the domain of a function: log of a non-positive number,
// vanishing W_v, zero speed, non positive-definite metric, and so on.
class DomainError : public Error {
 public:
  using Error::Error;
};

// A numerical procedure (continuation, bracketing, integration) could not
// complete.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace nshift
