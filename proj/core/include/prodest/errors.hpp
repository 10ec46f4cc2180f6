#pragma once

#include <stdexcept>
#include <string>

namespace prodest {

/// Shapes that do not fit an operation (N < n, N not a multiple of n, ...).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An exact enumeration would exceed its configured term cap.
class EnumerationInfeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An input broke a documented contract (NaN potential, bad probabilities, ...).
class ContractViolation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A tuning search hit its ceiling without meeting its target.
class TuningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace prodest
