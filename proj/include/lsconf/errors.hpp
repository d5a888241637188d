#pragma once

#include <stdexcept>
#include <string>

namespace lsconf {

/// Base of every error raised by the library. The CLI maps IoError to exit
/// code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Violated precondition or API contract.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Tensor shapes do not conform.
class DimensionError : public ContractError {
public:
    using ContractError::ContractError;
};

/// Batch statistics cannot be estimated from the given batch.
class DegenerateBatchError : public ContractError {
public:
    using ContractError::ContractError;
};

/// Invalid cluster, model or run configuration.
class ConfigError : public ContractError {
public:
    using ContractError::ContractError;
};

/// Unknown term in a text query.
class VocabularyError : public ContractError {
public:
    using ContractError::ContractError;
};

/// Two indices were produced by different encoders or geometries.
class IncompatibleIndexError : public ContractError {
public:
    using ContractError::ContractError;
};

/// Plot requested for a latent space the emitter cannot draw.
class UnsupportedPlotError : public ContractError {
public:
    using ContractError::ContractError;
};

/// A forward value became NaN/Inf during training.
class NumericError : public ContractError {
public:
    using ContractError::ContractError;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace lsconf
