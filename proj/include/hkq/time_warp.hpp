#pragma once

#include <span>
#include <vector>

#include "hkq/pinney.hpp"

namespace hkq {

/// The rescaled-time map T(t) = int_{t0}^{t} dt'/rho^2(t') and its inverse.
/// Cumulative node values are built once with adaptive Simpson on the Pinney
/// dense output (refined to ~1e-13 relative); T is strictly increasing since
/// the integrand 1/rho^2 is positive. Owns an immutable copy of the solution.
class TimeWarp {
 public:
  explicit TimeWarp(PinneySolution sol, double rel_tol = 1e-13);

  double warp(double t) const;
  double unwarp(double T) const;

  double t_begin() const { return sol_.t_begin(); }
  double t_end() const { return sol_.t_end(); }
  double T_end() const { return T_.back(); }
  const PinneySolution& pinney() const { return sol_; }
  std::span<const double> node_T() const { return T_; }

 private:
  double integrate(double a, double b) const;

  PinneySolution sol_;
  std::vector<double> T_;
  double rel_tol_;
};

inline double warp_time(const TimeWarp& w, double t) { return w.warp(t); }
inline double unwarp_time(const TimeWarp& w, double T) { return w.unwarp(T); }

}  // namespace hkq
