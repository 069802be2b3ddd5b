#pragma once

#include <stdexcept>
#include <string>

namespace blendgate {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration (policy, experiment, simulation). `field` names the offending key.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& message)
        : Error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// A value violated a domain invariant (distribution, history, event).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Bad caller arguments (k = 0, empty text, ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

}  // namespace blendgate
