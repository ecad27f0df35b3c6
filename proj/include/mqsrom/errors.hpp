#pragma once

#include <stdexcept>
#include <string>

namespace mqsrom {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument value (tolerance out of range, bad dimension, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Input violates a documented precondition (asymmetric matrix, non-SPD R, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Dense or sparse factorization failed.
class FactorizationError : public Error {
 public:
  FactorizationError(const std::string& what, double pivot)
      : Error(what + " (smallest pivot " + std::to_string(pivot) + ")"), pivot_(pivot) {}
  explicit FactorizationError(const std::string& what) : Error(what), pivot_(0.0) {}
  double pivot() const noexcept { return pivot_; }

 private:
  double pivot_;
};

/// Mesh or winding geometry that cannot be discretized.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Problem structure violated (rank-deficient X2, missing kernel, ...).
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// Material or circuit assumptions violated (non-monotone curve, mu >= 0, ...).
class AssumptionViolation : public Error {
 public:
  using Error::Error;
};

/// Reading Matrix Market files or problem bundles failed.
class IngestionError : public Error {
 public:
  enum class Kind { io, malformed_header, malformed_entry, index_out_of_bounds, invariant };

  IngestionError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// A numerical check that should hold by construction failed.
class ConstructionError : public Error {
 public:
  using Error::Error;
};

/// Newton iteration did not converge within the iteration budget.
class StepFailure : public Error {
 public:
  StepFailure(double t, int iterations, double residual)
      : Error("Newton failed at t=" + std::to_string(t) + " after " + std::to_string(iterations) +
              " iterations (residual " + std::to_string(residual) + ")"),
        time_(t),
        iterations_(iterations),
        residual_(residual) {}
  double time() const noexcept { return time_; }
  int iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }

 private:
  double time_;
  int iterations_;
  double residual_;
};

/// Inconsistent DAE initial value that projection could not repair.
class InitialConditionError : public Error {
 public:
  using Error::Error;
};

}  // namespace mqsrom
