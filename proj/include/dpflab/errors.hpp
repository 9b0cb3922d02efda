#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dpflab {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand shapes do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Invalid arguments: NaN/Inf entries, negative variances, indefinite weights.
class InputError : public Error {
public:
    using Error::Error;
};

// A controller constructor was called on a plant it does not apply to.
class PreconditionError : public Error {
public:
    using Error::Error;
};

// Synthesis failed (no stabilizing solution, undetectable pair, ...).
class SynthesisError : public Error {
public:
    using Error::Error;
};

class NonConvergenceError : public Error {
public:
    NonConvergenceError(const std::string& what, double last_residual, std::size_t iterations)
        : Error(what), last_residual_(last_residual), iterations_(iterations) {}

    double last_residual() const noexcept { return last_residual_; }
    std::size_t iterations() const noexcept { return iterations_; }

private:
    double last_residual_;
    std::size_t iterations_;
};

// Equality constraints cannot be met. `index` names the violated row (numerics)
// or the disturbance column (SLS synthesis).
class InfeasibleError : public Error {
public:
    InfeasibleError(const std::string& what, std::size_t index, double violation)
        : Error(what), index_(index), violation_(violation) {}

    std::size_t index() const noexcept { return index_; }
    double violation() const noexcept { return violation_; }

private:
    std::size_t index_;
    double violation_;
};

// Closed loop is not stable; carries the offending spectral radius.
class InstabilityError : public Error {
public:
    InstabilityError(const std::string& what, double spectral_radius)
        : Error(what), spectral_radius_(spectral_radius) {}

    double spectral_radius() const noexcept { return spectral_radius_; }

private:
    double spectral_radius_;
};

}  // namespace dpflab
