// Exception types shared across the library.
#pragma once

#include <stdexcept>
#include <string>

namespace connlab {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed values inside otherwise well-typed inputs (NaN entries, bad cells).
struct InvalidInputError : Error {
  using Error::Error;
};

// Inputs that are structurally valid but have no meaningful answer
// (zero-variance matrix, empty feature set).
struct DegenerateInputError : Error {
  using Error::Error;
};

// Caller passed an out-of-contract argument.
struct InvalidArgumentError : Error {
  using Error::Error;
};

// Filesystem and parsing failures; message carries file (and line) context.
struct IoError : Error {
  using Error::Error;
};

// Serialized artifact does not match the documented format or version.
struct FormatError : Error {
  using Error::Error;
};

// Training produced a non-finite loss; `iteration` is where it happened.
struct DivergedTrainingError : Error {
  explicit DivergedTrainingError(int iteration_, const std::string& msg)
      : Error(msg), iteration(iteration_) {}
  int iteration;
};

}  // namespace connlab
