#pragma once

#include <stdexcept>
#include <string>

namespace rim {

// Invalid arguments and out-of-range values use std::invalid_argument and
// std::out_of_range directly; the types below cover the remaining failure
// classes the CLI maps onto distinct exit codes.

/// An object is in a state that forbids the requested operation
/// (missing gradients, non-finite parameters).
class InvalidState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Input is well-formed but degenerate (all-zero signal, empty noise set).
class DegenerateInput : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Filesystem failure: unwritable path, short write.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An on-disk artifact is missing or fails validation.
class ArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class NumericalAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rim
