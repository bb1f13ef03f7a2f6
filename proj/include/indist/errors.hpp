#pragma once

#include <stdexcept>
#include <string>

namespace indist {

// Base of every error thrown by the library. Callers that only care about
// "something went wrong in indist" catch this one.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Two emitters at the same position.
class DegenerateGeometry : public Error {
 public:
  using Error::Error;
};

// Propagation / quadrature could not meet its tolerance.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Correlation grid carries no photon (denominator of I below threshold).
class NoEmission : public Error {
 public:
  using Error::Error;
};

class PackingError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class StudyError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace indist
