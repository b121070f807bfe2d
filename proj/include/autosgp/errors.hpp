#ifndef AUTOSGP_ERRORS_HPP
#define AUTOSGP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace autosgp {

/// Every attempt of the jittered factorization produced a non-positive or
/// non-finite pivot.
class PositiveDefiniteFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An objective (LML, ELBO, ...) could not be evaluated to a finite value.
/// Optimizers treat this as a restart trigger rather than a fatal error.
class NonFiniteObjective : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PackDomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when the optimizer is handed a starting point it cannot evaluate.
class InvalidStart : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TrainingFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A computed quantity violated an invariant by more than rounding can explain.
class InternalConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace autosgp

#endif  // AUTOSGP_ERRORS_HPP
