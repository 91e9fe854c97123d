#pragma once

#include <stdexcept>
#include <string>

namespace tgseg {

// Error taxonomy shared by the library and the CLI exit-code mapping:
// config -> 2, data/format/validation/state/spec -> 3, numeric -> 4.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};

// Anything wrong with bytes on disk: bad magic, truncated payload, bad header.
struct FormatError : Error {
    using Error::Error;
};

// Caller broke a documented precondition (ranges, dims, invalid values).
struct ValidationError : Error {
    using Error::Error;
};

// Tensor/grid dimensions do not line up.
struct ShapeError : Error {
    using Error::Error;
};

// Object used before initialization (encoder without params, model without checkpoint).
struct StateError : Error {
    using Error::Error;
};

// A synthetic scene specification that cannot be realized.
struct SpecError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// Non-finite value surfaced during training/inference. what() names the tensor role.
struct NumericError : Error {
    using Error::Error;
};

}  // namespace tgseg
