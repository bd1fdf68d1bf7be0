#pragma once

#include <stdexcept>
#include <string>

namespace hmmbounds {

// Operand shapes do not line up (vector length vs matrix side, etc).
struct DimensionMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// 1-based state or observation index outside the model range.
struct IndexOutOfRange : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// Observation has (numerically) zero probability under every state.
struct ZeroLikelihood : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A matrix required to be totally positive of order 2 is not.
struct NotTP2 : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A matrix required to be a generator (zero row sums, nonnegative
// off-diagonal, tridiagonal band) is not.
struct NotGenerator : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Constraint set of an optimization problem is (detectably) empty.
struct Infeasible : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Iteration cap hit before the requested tolerances were met.
struct SolverStalled : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Post-processing could not keep the solution within its error budget.
struct PostProcessDegraded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Importance-sampling distribution has invalid (negative) mass.
struct DegenerateDistribution : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Lower/upper bound pair fails its ordering or shape requirements.
struct InvalidBounds : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Operation is defined for finite observation alphabets only.
struct RequiresDiscreteObs : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Acceptance region of the constrained sampler degenerated everywhere.
struct DegenerateF : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Requested dense materialization or brute-force check exceeds its cap.
struct SizeCap : std::length_error {
  using std::length_error::length_error;
};

// File missing, unwritable, or failing to parse as its documented format.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace hmmbounds
