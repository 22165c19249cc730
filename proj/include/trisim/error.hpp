#ifndef TRISIM_ERROR_HPP
#define TRISIM_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace trisim {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed expression text; offset is the byte position of the problem.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Expression evaluation failure (unbound symbol, division by zero, non-finite value).
class EvalError : public Error {
 public:
  using Error::Error;
};

/// Model file or model construction error. line is 1-based, 0 when not tied to a line.
class ModelError : public Error {
 public:
  explicit ModelError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Invalid configuration, override, or precondition supplied by the caller.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A simulation could not complete; time_reached is the simulated time at failure.
class SimulationError : public Error {
 public:
  SimulationError(const std::string& what, double time_reached)
      : Error(what + " (t = " + std::to_string(time_reached) + ")"), time_reached_(time_reached) {}
  double time_reached() const noexcept { return time_reached_; }

 private:
  double time_reached_;
};

}  // namespace trisim

#endif  // TRISIM_ERROR_HPP
