#pragma once

#include <stdexcept>
#include <string>

namespace trialsent {

/// Base of every error the pipeline raises. `exit_code()` follows the CLI
/// convention: 1 usage/config, 2 data, 3 transport.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const noexcept { return 2; }
};

class ConfigError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 1; }
};

/// Malformed or inconsistent input data (bad labels, overlaps, empty sets).
class InputError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class LoadError : public Error {
public:
    using Error::Error;
};

class TransportError : public Error {
public:
    TransportError(const std::string& what, bool retryable)
        : Error(what), retryable_(retryable) {}
    bool retryable() const noexcept { return retryable_; }
    int exit_code() const noexcept override { return 3; }

private:
    bool retryable_;
};

/// A stage ran before the artifact it depends on was produced.
class MissingArtifactError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 1; }
};

}  // namespace trialsent
