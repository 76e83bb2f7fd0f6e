#pragma once

#include <stdexcept>
#include <string>

namespace dekan {

// Inconsistent shapes or hyperparameters; CLI exit code 1.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad call-site data (non-binary targets, mismatched streams, out-of-range values).
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Dataset ingestion / file I/O problems; CLI exit code 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite losses or gradients; CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CheckpointError : public DataError {
public:
    using DataError::DataError;
};

class CheckpointVersionError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

class CheckpointTruncatedError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

class CheckpointShapeError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

}  // namespace dekan
