#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace basinlab {

// Precondition or construction-time contract violation (bad sizes, invalid
// probabilities, out-of-range arguments).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Base class for failures of a numerical procedure. The operation name is
// carried separately so the CLI can report which step failed.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(std::string operation, const std::string& what)
      : std::runtime_error(what), operation_(std::move(operation)) {}
  const std::string& operation() const noexcept { return operation_; }

 private:
  std::string operation_;
};

class UnsupportedOperation : public NumericalError {
 public:
  explicit UnsupportedOperation(const std::string& primitive)
      : NumericalError("autodiff",
                       "non-smooth primitive '" + primitive +
                           "' is not differentiable in forward mode") {}
};

class SingularSystem : public NumericalError {
 public:
  explicit SingularSystem(const std::string& what)
      : NumericalError("linear_solve", what) {}
};

class UnrollDivergence : public NumericalError {
 public:
  UnrollDivergence(int step, const std::string& where)
      : NumericalError("unroll_inner", "inner-loop chain diverged at step " +
                                           std::to_string(step) + " (" +
                                           where + ")"),
        step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

class EstimatorBlowup : public NumericalError {
 public:
  explicit EstimatorBlowup(const std::string& what)
      : NumericalError("sampled_update", what) {}
};

}  // namespace basinlab
