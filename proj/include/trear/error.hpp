#pragma once

#include <stdexcept>
#include <string>

namespace trear {

/// Base class for every error thrown by the library.
struct TrearError : std::runtime_error {
    explicit TrearError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor shapes do not satisfy an operation's contract.
struct DimensionError : TrearError {
    using TrearError::TrearError;
};

/// A scalar argument is outside its valid range.
struct ParameterError : TrearError {
    using TrearError::TrearError;
};

/// Model or training configuration is inconsistent.
struct ConfigError : TrearError {
    using TrearError::TrearError;
};

/// Input data violates a documented precondition.
struct DataError : TrearError {
    using TrearError::TrearError;
};

/// A file on disk does not match its declared format.
struct FormatError : TrearError {
    using TrearError::TrearError;
};

/// Filesystem-level failure (open, read, write).
struct IoError : TrearError {
    using TrearError::TrearError;
};

/// An index is out of range.
struct IndexError : TrearError {
    using TrearError::TrearError;
};

/// An API contract was violated by the caller.
struct ContractError : TrearError {
    using TrearError::TrearError;
};

/// Training produced a non-finite loss.
struct DivergenceError : TrearError {
    using TrearError::TrearError;
};

}  // namespace trear
