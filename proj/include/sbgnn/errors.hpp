#pragma once

#include <stdexcept>

namespace sbgnn {

// Error taxonomy shared across the library. The CLI maps any of these to a
// single "error: <message>" line on stderr and a nonzero exit status.

// Malformed file structure (ragged CSV, missing manifest field, absent file).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A token that cannot be read as the expected type.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A violated data invariant (constant row, asymmetric adjacency, bad label).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An out-of-range flag or configuration value.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Divergence or non-convergence of a numerical procedure.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sbgnn
