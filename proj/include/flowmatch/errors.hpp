#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace flowmatch {

enum class ErrorKind {
  kConfig,
  kContract,
  kNumerical,
  kConvergence,
  kDegenerateData,
  kUnderflow,
  kStiffness,
  kDivergence,
  kIllConditionedReference,
  kVersionMismatch,
  kIo,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Non-finite intermediate in a batch computation; `index` is the offending row.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, std::ptrdiff_t index = -1)
      : Error(ErrorKind::kNumerical, what), index_(index) {}
  std::ptrdiff_t index() const { return index_; }

 private:
  std::ptrdiff_t index_;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double violation, long iterations)
      : Error(ErrorKind::kConvergence, what),
        violation_(violation),
        iterations_(iterations) {}
  double violation() const { return violation_; }
  long iterations() const { return iterations_; }

 private:
  double violation_;
  long iterations_;
};

// Integration failures carry the step at which they happened.
class IntegrationError : public Error {
 public:
  IntegrationError(ErrorKind kind, const std::string& what, long step,
                   double t)
      : Error(kind, what), step_(step), t_(t) {}
  long step() const { return step_; }
  double time() const { return t_; }

 private:
  long step_;
  double t_;
};

[[noreturn]] inline void throw_error(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) throw Error(kind, what);
}

}  // namespace flowmatch
