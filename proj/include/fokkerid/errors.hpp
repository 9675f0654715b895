#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fokkerid {

// Base for every error raised by the library. The CLI maps the concrete
// subclasses onto exit codes (config 1, IO 2, numerical 3).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class MeshQualityError : public Error {
public:
    using Error::Error;
};

class InterpolationError : public Error {
public:
    using Error::Error;
};

class EvaluationError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

// Linear solve failure inside a time-stepping loop.
class SolverError : public NumericalError {
public:
    SolverError(const std::string& what, std::size_t step)
        : NumericalError(what + " (time step " + std::to_string(step) + ")"), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

}  // namespace fokkerid
