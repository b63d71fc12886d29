#pragma once

#include <stdexcept>
#include <string>

namespace hf {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Array dimensions do not match what an operation requires.
struct ShapeError : Error {
    using Error::Error;
};

/// A value is outside its documented domain (e.g. t outside [0,1], r > t).
struct DomainError : Error {
    using Error::Error;
};

/// A non-finite value appeared where the contract requires finite output.
struct NumericError : Error {
    using Error::Error;
};

/// A backward pass was given a trace that does not match the network/batch.
struct TraceError : Error {
    using Error::Error;
};

/// Invalid configuration (bad field values, inconsistent dimensions).
struct ValidationError : Error {
    using Error::Error;
};

/// Filesystem / serialization failure.
struct IoError : Error {
    using Error::Error;
};

}  // namespace hf
