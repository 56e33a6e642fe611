#pragma once

#include <stdexcept>
#include <string>

namespace chancal {

// Bad input: shapes, ranges, malformed files. The CLI maps these to exit code 2.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Numerical or degeneracy failures. The CLI maps these to exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A realization with a non-positive temporal moment (zero signal).
class DegenerateSignalError : public NumericalError {
public:
    DegenerateSignalError(const std::string& what, std::size_t row)
        : NumericalError(what), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

// Point sets whose pairwise distances are all zero.
class DegenerateDataError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class DivergentGraphError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class ResourceGuardError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class StuckProposalError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class DegenerateWeightsError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

} // namespace chancal
