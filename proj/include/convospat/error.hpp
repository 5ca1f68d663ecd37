#pragma once

#include <stdexcept>
#include <string>

namespace convospat {

// Each error carries a short category used by the CLI's one-line failure
// report ("error: <category>: <message>").

/// Malformed or out-of-range input: bad parameters, bad files, bad shapes.
class InputError : public std::invalid_argument {
 public:
  explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

/// Filesystem failures: missing files, unwritable directories.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical breakdown: singular factorisations, non-finite densities.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace convospat
