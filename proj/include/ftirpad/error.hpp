#pragma once

#include <stdexcept>
#include <string>

namespace ftirpad {

/// Invalid arguments, malformed config files, missing inputs.  CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Data that violates a precondition: degenerate geometry, single-class
/// training sets, mismatched dimensions.  CLI exit code 3.
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace ftirpad
