#pragma once

#include <stdexcept>
#include <string>

namespace bf {

// Bad input: wrong dimensions, out-of-range parameters, malformed files.
// The CLI maps these to exit code 1.
class ValidationError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// Failure while running a computation (divergence, non-finite gradients,
// I/O errors mid-run). The CLI maps these to exit code 2.
class RuntimeError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace bf
