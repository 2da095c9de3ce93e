#pragma once

#include <stdexcept>
#include <string>

namespace qlsim {

/// Invalid input: bad index, dimension mismatch, violated precondition.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// An iterative method failed to converge or a root was not bracketed.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Requested problem exceeds the configured memory/dimension budget.
class CapacityError : public std::length_error {
public:
    using std::length_error::length_error;
};

/// Operation not defined for the given configuration (e.g. open boundary).
class UnsupportedError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// A fit could not be performed (too few points, flat or degenerate data).
class FitError : public DomainError {
public:
    using DomainError::DomainError;
};

namespace detail {

template <class E>
[[noreturn]] inline void raise(const std::string &where, const std::string &what) {
    throw E(where + ": " + what);
}

} // namespace detail
} // namespace qlsim
