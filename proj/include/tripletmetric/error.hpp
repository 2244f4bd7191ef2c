#pragma once

#include <stdexcept>
#include <string>

namespace tripletmetric {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration: bad hyperparameters, malformed config documents,
/// out-of-range distribution parameters. CLI exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Problems with the data itself: parse failures, non-finite values,
/// dimension mismatches, too few individuals. CLI exit code 3.
class DataError : public Error {
public:
    using Error::Error;
};

/// Arguments that violate an operation's preconditions (bad indices,
/// mismatched shapes, empty batches).
class InvalidInputError : public DataError {
public:
    using DataError::DataError;
};

/// Not enough individuals or comparisons left to proceed.
class InsufficientDataError : public DataError {
public:
    using DataError::DataError;
};

/// Numerical failures encountered while running an algorithm.
/// CLI exit code 4.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// An iterative solver did not reach its tolerance within the
/// iteration budget.
class ConvergenceError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// A comparison graph fell apart into multiple components.
class ConnectivityError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// A matrix that must be positive definite is (numerically) singular.
class RankDeficiencyError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// The initialization stage could not produce a usable starting point.
class InitializationError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

} // namespace tripletmetric
