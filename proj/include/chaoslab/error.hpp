#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace chaoslab {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid arguments: non-finite states, bad parameters, shape mismatches.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Inputs that make a computation meaningless (zero variance, identical x, zero separation).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Iterative numerical routine failed to converge.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& what, std::size_t step, double t)
      : Error(what + " (step " + std::to_string(step) + ", t=" + std::to_string(t) + ")"),
        step_(step),
        t_(t) {}

  std::size_t step() const noexcept { return step_; }
  double time() const noexcept { return t_; }

 private:
  std::size_t step_;
  double t_;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent files (CSV/JSON).
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace chaoslab
