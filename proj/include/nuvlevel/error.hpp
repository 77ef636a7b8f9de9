#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nuvlevel {

/// Inputs that violate a documented precondition (dimensions, level order, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Both prior variances are zero, so the binarizing prior is not a density.
class InvalidTheta : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// The EM threshold has a pole at the midpoint of the two levels.
class UndefinedThreshold : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A Gaussian recursion produced a non positive definite innovation covariance.
class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& what, std::size_t step,
                   std::size_t iteration = 0)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"),
        step_(step),
        iteration_(iteration) {}

  NumericalFailure with_iteration(std::size_t iteration) const {
    NumericalFailure copy = *this;
    copy.iteration_ = iteration;
    return copy;
  }

  std::size_t step() const noexcept { return step_; }
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t step_;
  std::size_t iteration_;
};

/// Exhaustive search refused because the tree is larger than the node budget.
class BudgetExceeded : public std::runtime_error {
 public:
  BudgetExceeded(double required, double budget)
      : std::runtime_error("exhaustive search needs " + std::to_string(required) +
                           " leaf sequences, budget is " + std::to_string(budget)),
        required_(required) {}
  double required() const noexcept { return required_; }

 private:
  double required_;
};

}  // namespace nuvlevel
