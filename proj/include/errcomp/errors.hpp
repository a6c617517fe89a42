#pragma once

#include <stdexcept>
#include <string>

namespace errcomp {

struct InvalidParameter : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DimensionMismatch : std::invalid_argument {
  DimensionMismatch(std::size_t expected, std::size_t got)
      : std::invalid_argument("dimension mismatch: expected " + std::to_string(expected) +
                              ", got " + std::to_string(got)) {}
};

// Raised when no memory entry is available for a query. Callers on the
// prediction path fall back to zero compensation instead.
struct EmptyNeighborhood : std::runtime_error {
  EmptyNeighborhood() : std::runtime_error("empty neighborhood") {}
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateLabels : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace errcomp
