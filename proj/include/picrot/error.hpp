#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace picrot {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A generated trajectory escaped the overflow guard.
class GenerationError : public Error {
public:
    GenerationError(const std::string& what, std::size_t step)
        : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
    [[nodiscard]] std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

class ConstantSeriesError : public Error {
public:
    ConstantSeriesError() : Error("series is constant; cannot z-normalize") {}
};

class NonFiniteError : public Error {
public:
    using Error::Error;
};

class OutOfGridError : public Error {
public:
    using Error::Error;
};

/// A diagram (or overlay) had no off-diagonal points to build a density from.
class EmptyDensityError : public Error {
public:
    using Error::Error;
};

/// exp(-m/lambda) underflowed; the caller should use the log-domain solver.
class NumericalUnderflowError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

class StratificationError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace picrot
