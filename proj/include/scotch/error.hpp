#pragma once

#include <stdexcept>
#include <string>

namespace scotch {

// Every error raised by the library derives from Error. The CLI maps each
// category onto its own exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

// Caller violated a precondition of the API (e.g. backward on a non-scalar).
class ContractError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

// Two observation times landed on the same solver grid point.
class ResolutionError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class InterventionError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, long step)
        : Error(what), step_(step) {}
    long step() const noexcept { return step_; }

private:
    long step_;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

// AUROC and friends are undefined without both classes present.
class MetricError : public Error {
public:
    using Error::Error;
};

}  // namespace scotch
