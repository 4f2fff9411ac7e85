#pragma once

#include <stdexcept>
#include <string>

namespace dtrf {

// Base class for all library errors. The CLI maps subclasses to exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor/grid dimensions do not line up (also covers patch divisibility).
struct ShapeError : Error {
    using Error::Error;
};

// Malformed file contents (feature files, checkpoints, manifests, configs).
struct ParseError : Error {
    using Error::Error;
};

// NaN/Inf encountered in an input or an intermediate computation.
struct NonFiniteError : Error {
    using Error::Error;
};

// Invalid or contradictory configuration.
struct ConfigError : Error {
    using Error::Error;
};

// A pipeline stage was invoked before its upstream artifact exists.
struct MissingPrerequisiteError : Error {
    using Error::Error;
};

// Two ParameterSets cannot be merged (name/order/shape mismatch).
struct IncompatibleParamsError : Error {
    using Error::Error;
};

// Dataset-level problems (missing masks, unreadable files, degenerate specs).
struct DataError : Error {
    using Error::Error;
};

} // namespace dtrf
