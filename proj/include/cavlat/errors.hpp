#pragma once

#include <stdexcept>
#include <string>

namespace cavlat {

// Shape or size mismatch between a state and its geometry.
class DimensionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// Argument outside the domain where an operation is defined.
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

// A documented precondition of an operation was violated by the caller.
class ContractViolation : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

// a|psi> vanishes, so no photon can be removed.
class NoJumpPossible : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Numerical cutoff or grid found inadequate; the message names a remedy.
class ConvergenceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace cavlat
