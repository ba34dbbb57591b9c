// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace dfpo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Vector or matrix dimensions do not agree with what an operation expects.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A computation produced a non-finite value.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration (bad field, missing field, inconsistent values).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Caller violated an operation precondition (empty batch, bad index...).
class UsageError : public Error {
public:
    using Error::Error;
};

/// A cost functional is undefined at the given state.
class DegenerateError : public Error {
public:
    using Error::Error;
};

/// Filesystem problems; the message carries the path.
class IoError : public Error {
public:
    using Error::Error;
};

/// Checkpoint integrity failure: bad magic, truncation or checksum mismatch.
class ChecksumError : public Error {
public:
    using Error::Error;
};

/// A diagnostic or acceptance threshold was not met.
class ThresholdError : public Error {
public:
    using Error::Error;
};

}  // namespace dfpo
