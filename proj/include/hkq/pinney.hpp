#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hkq/errors.hpp"
#include "hkq/frequency_profile.hpp"

namespace hkq {

struct PinneyOptions {
  double max_step = 0.05;   // caps the dense-output interval length
  double min_step = 1e-12;  // below this the profile is declared stiff
  double initial_step = 1e-3;
};

/// A particular solution rho(t) of  rho'' + omega^2(t) rho = Omega^2 / rho^3,
/// stored as (rho, rho', rho'') at the accepted integration nodes with a
/// per-interval quintic Hermite dense output. Immutable once built.
class PinneySolution {
 public:
  double omega_cap() const { return omega_cap_; }
  double t_begin() const { return t_.front(); }
  double t_end() const { return t_.back(); }
  std::span<const double> grid() const { return t_; }
  std::span<const double> rho_nodes() const { return rho_; }
  std::span<const double> rho_dot_nodes() const { return rho_dot_; }

  double rho(double t) const;
  double rho_dot(double t) const;
  double rho_ddot(double t) const;

  /// Max |defect| observed while sampling between nodes during the solve.
  double residual_bound() const { return residual_bound_; }
  int interpolation_order() const { return 5; }

  std::size_t locate(double t) const;  // interval index, throws out_of_range

 private:
  friend PinneySolution solve_pinney(const FrequencyProfile&, double, double, double, double,
                                     double, double, const PinneyOptions&);
  double omega_cap_ = 0.0;
  double residual_bound_ = 0.0;
  // (rho, rho', rho'', rho''') at the nodes; the higher derivatives follow
  // from the equation itself, so each order interpolates from its own Hermite
  // data without differencing lower-order values.
  std::vector<double> t_, rho_, rho_dot_, rho_ddot_, rho_d3_;
};

/// Integrates the Pinney equation as the first-order system (rho, rho') with
/// an adaptive Dormand-Prince RK45. Requires Omega > 0 (so rho never vanishes)
/// and rho0 > 0. The returned solution carries max sampled |defect| <= tol;
/// max_step is halved and the solve retried until that holds.
PinneySolution solve_pinney(const FrequencyProfile& profile, double omega_cap, double rho0,
                            double rho_dot0, double t0, double t1, double tol,
                            const PinneyOptions& opts = {});

/// Defect of the dense output: rho''(t) + omega^2(t) rho(t) - Omega^2/rho^3(t),
/// with rho'' taken from the interpolant (identically ~0 at the nodes).
double pinney_residual(const PinneySolution& sol, const FrequencyProfile& profile, double t);

/// Equilibrium-style default initial amplitude sqrt(Omega/omega(0)).
double default_rho0(const FrequencyProfile& profile, double omega_cap, double t0);

}  // namespace hkq
