#pragma once

#include <stdexcept>
#include <string>

namespace beable {

/// Invalid user input: malformed files, out-of-range parameters.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical invariant was violated (norm drift, non-Hermitian generator, ...).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An analysis had nothing to work with (empty selection, all windows excluded).
class EmptyResultError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace beable
