#pragma once

#include <stdexcept>
#include <string>

namespace muser {

// Malformed external input (bad JSONL line, unknown chord token, ...).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Structurally valid input that violates a domain contract
// (label kind vs dataset kind, value outside its declared range, ...).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration: ratios that do not sum to 1, dimension mismatches,
// weights outside [0, 1], missing prerequisites for a command.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid runtime input to an operation (empty segment list, n < 2 for R2).
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// An embedding/chord provider broke its contract (frame-count mismatch,
// unreadable provider file).
class ProviderError : public std::runtime_error {
 public:
  explicit ProviderError(const std::string& msg) : std::runtime_error(msg) {}
};

// Metric undefined on the given inputs (constant targets, no valid label).
class EvalError : public std::runtime_error {
 public:
  explicit EvalError(const std::string& msg) : std::runtime_error(msg) {}
};

// I/O failure on caches, checkpoints, or reports.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace muser
