#pragma once

#include <stdexcept>
#include <string>

namespace pulab {

/// Invalid configuration, shape, or argument supplied by the caller.
class SpecError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A NaN or Inf appeared where finite values are required.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An API was used out of order (backward twice, Adam without grads, ...).
class UsageError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Malformed or truncated input file.
class IngestError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace pulab
