#pragma once

#include <stdexcept>
#include <string>

namespace dbea {

// Exit codes surfaced by the CLI.
enum class ExitCode : int {
  ok = 0,
  config = 2,
  data = 3,
  divergence = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::config, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ExitCode::data, what) {}
};

// Tensor or record shapes disagree with what an operation expects.
class ShapeError : public DataError {
 public:
  explicit ShapeError(const std::string& what) : DataError("shape error: " + what) {}
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error(ExitCode::divergence, what) {}
};

// A metric has no defined value for the given input (single-class, zero variance, ...).
class UndefinedMetric : public DataError {
 public:
  explicit UndefinedMetric(const std::string& what) : DataError("undefined metric: " + what) {}
};

}  // namespace dbea
