#pragma once

#include <stdexcept>
#include <string>

namespace hnn {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not compose (matmul inner dims, broadcast rows, ...).
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Invalid numeric hyperparameter handed to a primitive (eps <= 0, stddev <= 0).
class ParameterError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

/// Argument outside a function's mathematical domain (log of a nonpositive probability).
class DomainError : public Error {
public:
    using Error::Error;
};

class ContractViolation : public Error {
public:
    using Error::Error;
};

// Data errors map to CLI exit code 1.
class DataError : public Error {
public:
    using Error::Error;
};

class VocabularyError : public DataError {
public:
    using DataError::DataError;
};

class TruncationError : public DataError {
public:
    using DataError::DataError;
};

class ParseError : public DataError {
public:
    using DataError::DataError;
};

class ConversionError : public DataError {
public:
    using DataError::DataError;
};

class AlignmentError : public DataError {
public:
    using DataError::DataError;
};

// Configuration errors map to CLI exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Raised by the optimizer when a gradient is not finite.
class TrainingHalt : public Error {
public:
    using Error::Error;
};

}  // namespace hnn
