#pragma once

#include <stdexcept>
#include <string>

namespace keysched {

// Bad user-supplied configuration (field named in the message).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Index outside the valid frame range.
struct BoundsError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// Query with k > i where k must precede i.
struct OrderingError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Non-finite numeric input.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shape disagreement between params / grads / optimizer state.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operation invoked in the wrong state (untrained regressor, parameters
// mutated under a batch, ...).
struct StateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  ParseError(const std::string& path, int line, const std::string& msg)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + msg),
        line_no(line) {}
  int line_no;
};

struct VersionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace keysched
