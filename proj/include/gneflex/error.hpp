#pragma once

#include <stdexcept>
#include <string>

namespace gneflex {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector or matrix sizes disagree with the problem dimensions.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Problem data violates a documented invariant (negative alpha, N < 2, ...).
class InvalidModelError : public Error {
 public:
  using Error::Error;
};

/// The coupled feasible set K is empty, or has no strictly feasible point.
class InfeasibleSetError : public Error {
 public:
  using Error::Error;
};

class DisconnectedGraphError : public Error {
 public:
  using Error::Error;
};

/// Step-size or kappa selection cannot satisfy the cocoercivity / averagedness
/// conditions.
class TuningError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace gneflex
