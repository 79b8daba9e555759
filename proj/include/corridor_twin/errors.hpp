#pragma once

#include <stdexcept>
#include <string>

namespace ctwin {

/// Raised when a caller violates an operation's precondition (shape, range, schema).
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A metric whose defining formula has no value for the given inputs.
class UndefinedMetricError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Filesystem or stream failure; the message carries the offending path.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CheckpointVersionError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

class CheckpointShapeError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

class CheckpointCorruptError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

}  // namespace ctwin
