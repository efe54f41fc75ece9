#pragma once

#include <stdexcept>
#include <string>

namespace hkq {

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Adaptive step size underflowed: the profile is stiff or singular on the span.
struct StiffProfileError : SolverError {
  using SolverError::SolverError;
};

/// A state that is analytically impossible (e.g. rho <= 0 with Omega != 0)
/// was produced numerically. Never clamped, always reported.
struct InternalConsistencyError : SolverError {
  using SolverError::SolverError;
};

/// Wave-function mass at the grid edge is above threshold; the grid must be widened.
struct GridTooNarrowError : SolverError {
  using SolverError::SolverError;
};

/// Requested explicit step violates the stability bound of the grid evolver.
struct CflError : SolverError {
  using SolverError::SolverError;
};

}  // namespace hkq
