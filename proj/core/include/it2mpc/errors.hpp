#pragma once

#include <stdexcept>
#include <string>

namespace it2mpc {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite or structurally malformed matrix input.
class InvalidMatrix : public Error {
public:
    using Error::Error;
};

// A block that must be inverted is (numerically) singular.
class SingularBlock : public Error {
public:
    using Error::Error;
};

// Configuration or dimension problem. `field()` holds the JSON-style path of
// the offending entry when known (e.g. "subsystems[1].rules[0].A").
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message, std::string field = {})
        : Error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class MissingTrueMF : public Error {
public:
    using Error::Error;
};

class InitialInfeasible : public Error {
public:
    using Error::Error;
};

// Synthesis failed at k > 0 after succeeding at k = 0.
class RecursiveFeasibilityViolation : public Error {
public:
    RecursiveFeasibilityViolation(const std::string& message, std::size_t step)
        : Error(message), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

}  // namespace it2mpc
