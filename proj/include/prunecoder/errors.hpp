#pragma once

#include <stdexcept>
#include <string>

namespace prunecoder {

/// Base of every exception the toolkit throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller violated a documented precondition (bad flag, invalid prune spec, shape mismatch).
class UsageError : public Error {
public:
    using Error::Error;
};

/// Input data could not be parsed or is inconsistent with the model.
class DataError : public Error {
public:
    using Error::Error;
};

/// A computation produced NaN/Inf or otherwise failed numerically.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Checkpoint decoding failure. `kind()` distinguishes the failure modes so callers and
/// tests can tell a truncated file from a missing tensor.
class CheckpointError : public DataError {
public:
    enum class Kind {
        io,
        bad_magic,
        unsupported_version,
        malformed_header,
        missing_tensor,
        shape_mismatch,
        truncated,
        invalid_weights,
    };

    CheckpointError(Kind kind, const std::string& message, std::string tensor = {})
        : DataError(message), kind_(kind), tensor_(std::move(tensor)) {}

    Kind kind() const noexcept { return kind_; }
    const std::string& tensor() const noexcept { return tensor_; }

private:
    Kind kind_;
    std::string tensor_;
};

}  // namespace prunecoder
