#pragma once

#include <cstdint>
#include <vector>

#include "hkq/noise.hpp"
#include "hkq/pinney.hpp"

namespace hkq {

struct PlanarState {
  double x = 0.0;
  double y = 0.0;
  double time = 0.0;
  Frame frame = Frame::Rescaled;
};

/// States on the driving noise grid; deterministic given the path.
struct Trajectory {
  Frame frame = Frame::Rescaled;
  double omega_cap = 0.0;
  std::vector<double> times;
  std::vector<double> x, y;

  std::size_t size() const { return times.size(); }
  PlanarState state(std::size_t k) const { return {x[k], y[k], times[k], frame}; }
};

/// Euler-Maruyama for dR/dT = Omega x R + F n in the rescaled frame:
/// R_{k+1} = R_k + (Omega x R_k) dT_k + n dW_k, n = (1,1)/sqrt(2).
Trajectory integrate_em_rescaled(double omega_cap, const NoisePath& path, const PlanarState& r0);

/// Euler-Maruyama for the physical-frame equation
/// dr = [ (Omega x r)/rho^2 + (rho'/rho) r ] dt + n dW.
Trajectory integrate_em_physical(const PinneySolution& pinney, const NoisePath& path,
                                 const PlanarState& r0);

/// Ito (left-point) prefix sums of the rotation-weighted noise integrals:
/// plus[k]  = sum_{j<k} (cos Omega T_j + sin Omega T_j) dW_j
/// minus[k] = sum_{j<k} (cos Omega T_j - sin Omega T_j) dW_j
/// Shared by the exact solution and the invariants so the identity between
/// them is exact at grid points, not just up to quadrature error.
struct ItoPrefixSums {
  std::vector<double> plus, minus;
};

ItoPrefixSums ito_prefix_sums(double omega_cap, const NoisePath& path);

/// Closed-form solution of the rescaled equation on the path grid. Evaluation
/// off the grid is refused: the stochastic integrals are defined by their
/// left-point quadrature on exactly these nodes.
PlanarState exact_solution_rescaled(double omega_cap, const NoisePath& path, double x0,
                                    double y0, double T);
Trajectory exact_trajectory_rescaled(double omega_cap, const NoisePath& path, double x0,
                                     double y0);

struct LinearInvariants {
  double x0 = 0.0;
  double y0 = 0.0;
};

/// X0 = X cos + Y sin - (1/sqrt2) * plus, Y0 = -X sin + Y cos - (1/sqrt2) * minus.
LinearInvariants compute_invariants(const Trajectory& traj, const NoisePath& path, std::size_t k);
std::vector<LinearInvariants> invariants_series(const Trajectory& traj, const NoisePath& path);

/// Ensemble estimates of the one-step expansion around T=0: drifts
/// E[dX] ~ -Omega Y0 dT, E[dY] ~ +Omega X0 dT and the shared noise term with
/// variance hbar dT / 2. epsilon = sqrt(dT) is carried as a diagnostic label.
struct ShortTimeMoments {
  double delta_T = 0.0;
  double epsilon = 0.0;
  std::size_t sample_count = 0;
  double mean_dx = 0.0, se_dx = 0.0;
  double mean_dy = 0.0, se_dy = 0.0;
  double noise_var = 0.0, noise_var_se = 0.0;
  double expected_dx = 0.0, expected_dy = 0.0;
  double expected_noise_var = 0.0;
};

ShortTimeMoments short_time_moments(double omega_cap, const PhysicalConstants& constants,
                                    double x0, double y0, double delta_T, std::size_t m,
                                    uint64_t seed, std::size_t substeps = 64, int threads = 0);

}  // namespace hkq
