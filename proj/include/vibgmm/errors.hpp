#pragma once

#include <stdexcept>
#include <string>

namespace vibgmm {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or dimension disagreement between operands.
struct DimensionError : Error {
  using Error::Error;
};

// Argument outside an operation's mathematical domain (log of <= 0, ...).
struct DomainError : Error {
  using Error::Error;
};

// API misuse: backward on a detached handle, missing gradients, ...
struct UsageError : Error {
  using Error::Error;
};

// NaN or Inf produced where finite values are required.
struct NumericError : Error {
  using Error::Error;
};

struct ParseError : Error {
  using Error::Error;
};

// A probability table or configuration object violates its invariants.
struct ValidationError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

}  // namespace vibgmm
