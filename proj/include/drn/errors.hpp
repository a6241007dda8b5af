#pragma once

#include <stdexcept>
#include <string>

namespace drn {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes or channel counts do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Non-finite parameters, inputs or losses.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration values, layer indices or mismatched condition kinds.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent annotation documents.
class AnnotationError : public Error {
public:
    using Error::Error;
};

/// Dataset files that are missing, unreadable or malformed.
class IngestionError : public Error {
public:
    using Error::Error;
};

/// Evaluation inputs that violate a protocol precondition.
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// Reading or writing files failed.
class IoError : public Error {
public:
    using Error::Error;
};

/// A training loss became NaN or infinite.
class DivergenceError : public NumericError {
public:
    using NumericError::NumericError;
};

}  // namespace drn
