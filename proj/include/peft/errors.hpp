#pragma once

#include <stdexcept>
#include <string>

namespace peft {

/// Dimension mismatch between operands; the message names both shapes.
class ShapeError : public std::invalid_argument {
  public:
    explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Malformed or truncated on-disk data (bad magic, corrupt codes, ...).
class FormatError : public std::runtime_error {
  public:
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A file could not be opened at all (as opposed to parsing badly).
class IoError : public std::runtime_error {
  public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// An iterative solver hit its iteration cap; the message reports the residual.
class ConvergenceError : public std::runtime_error {
  public:
    explicit ConvergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A metric is undefined for the given inputs (e.g. empty reference).
class UndefinedMetricError : public std::domain_error {
  public:
    explicit UndefinedMetricError(const std::string& msg) : std::domain_error(msg) {}
};

/// Training diverged (non-finite loss); the message names the step.
class TrainingError : public std::runtime_error {
  public:
    explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A run configuration failed validation; the message names the field path.
class ConfigError : public std::invalid_argument {
  public:
    explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

} // namespace peft
