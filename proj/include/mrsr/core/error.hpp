#pragma once

#include <stdexcept>
#include <string>

namespace mrsr {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor extents or image sizes do not fit the operation.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A configuration value is unknown, out of range or inconsistent.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// An API was used out of order (second backward, missing head, ...).
class UsageError : public Error {
public:
    using Error::Error;
};

/// Input data failed validation (non one-hot targets, probabilities off the simplex).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A quantity is undefined for the given input (NMSE against an all-zero reference).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Data contains NaN or otherwise unusable values.
class DataError : public Error {
public:
    using Error::Error;
};

/// Filesystem read or write failure.
class IoError : public Error {
public:
    using Error::Error;
};

/// A training phase was started without the artifacts it depends on.
class DependencyError : public Error {
public:
    using Error::Error;
};

/// Training pairs violated the sampling contract (x1 == x2).
class SamplingError : public Error {
public:
    using Error::Error;
};

// Dataset loading failures.
class MissingPathError : public IoError {
public:
    using IoError::IoError;
};

class SizeMismatchError : public DataError {
public:
    using DataError::DataError;
};

class UnreadableFileError : public IoError {
public:
    using IoError::IoError;
};

class EmptyDatasetError : public DataError {
public:
    using DataError::DataError;
};

}  // namespace mrsr
