#pragma once

#include <stdexcept>
#include <string>

namespace rieszflow {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on arguments or a configuration constraint was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// An iterative solver stopped before meeting its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Explicit time step exceeded the stability bound of the upwind scheme.
class CflError : public Error {
 public:
  CflError(const std::string& what, double cfl_number)
      : Error(what), cfl_number_(cfl_number) {}
  double cfl_number() const noexcept { return cfl_number_; }

 private:
  double cfl_number_;
};

/// Reading or writing a file failed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace rieszflow
