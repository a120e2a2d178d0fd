#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fvp {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain (gamma pole, kernel singularity).
struct DomainError : Error {
  using Error::Error;
};

// Expression evaluation failure (ln of non-positive value, division by zero).
struct EvalError : Error {
  using Error::Error;
};

struct SyntaxError : Error {
  SyntaxError(const std::string& msg, std::size_t offset)
      : Error(msg + " at offset " + std::to_string(offset)), offset(offset) {}
  std::size_t offset;
};

// Bad input to a command or problem spec; maps to CLI exit code 2.
struct UsageError : Error {
  using Error::Error;
};

struct NotFound : UsageError {
  using UsageError::UsageError;
};

// Numerical solver failure; carries the last iterate and residual history.
struct SolverError : Error {
  SolverError(const std::string& msg, std::vector<double> last = {},
              std::vector<double> history = {})
      : Error(msg), last_iterate(std::move(last)), residual_history(std::move(history)) {}
  std::vector<double> last_iterate;
  std::vector<double> residual_history;
};

struct SingularJacobian : SolverError {
  using SolverError::SolverError;
};

}  // namespace fvp
