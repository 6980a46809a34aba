#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace comet {

// Base for every error raised by the library. The CLI maps the three
// families below onto exit codes 2, 3 and 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input: bad parameters, unknown experiment, invalid config.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Operands living on different tensor-product layouts.
class BasisMismatch : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Truncated Hilbert space too small: too much population in the top Fock levels.
class TruncationError : public Error {
 public:
  TruncationError(const std::string& what, int n_max, double tail)
      : Error(what), n_max_(n_max), tail_(tail) {}
  int n_max() const noexcept { return n_max_; }
  double tail() const noexcept { return tail_; }

 private:
  int n_max_;
  double tail_;
};

// Eigensolver failure, norm drift, non-converging step refinement, level crossing.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Compact number formatting for messages.
inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

}  // namespace comet
