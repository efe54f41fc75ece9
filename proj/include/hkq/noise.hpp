#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "hkq/constants.hpp"
#include "hkq/rng.hpp"
#include "hkq/time_warp.hpp"

namespace hkq {

/// One discretized white-noise realization, stored as Brownian increments
/// dW_k ~ N(0, hbar * dt_k) on the step grid. The pointwise noise f(t) on
/// step k is the derived view dW_k / dt_k. Regenerating with the same
/// (seed, stream) reproduces the path bit-exactly.
struct NoisePath {
  Frame frame = Frame::Physical;
  std::vector<double> times;  // n+1 node times, strictly increasing
  std::vector<double> dw;     // n increments
  PhysicalConstants constants;
  uint64_t seed = 0;
  uint64_t stream = 0;

  std::size_t steps() const { return dw.size(); }
  double dt(std::size_t k) const { return times[k + 1] - times[k]; }
  double f(std::size_t k) const { return dw[k] / dt(k); }
  double span() const { return times.back() - times.front(); }
};

std::vector<double> uniform_grid(double t0, double dt, std::size_t steps);

/// Draws the increments of one path. The grid must be strictly increasing;
/// hbar = 0 yields exactly zero increments.
NoisePath sample_noise(const PhysicalConstants& constants, std::vector<double> grid,
                       uint64_t seed, uint64_t stream, Frame frame = Frame::Physical);

/// Maps a physical-frame path to the rescaled frame: T_k = warp(t_k) and
/// dW^T_k = dW_k / rho(t_k) (left endpoint, Ito convention). Same realization,
/// no resampling; statistically white in T with strength hbar.
NoisePath rescale_noise(const NoisePath& path, const TimeWarp& warp);

/// Lag-binned second moments of f. The diagonal is per-step E[f_k^2]; lags are
/// binned by index distance on uniform grids and by time difference in bins of
/// width = median step on non-uniform grids. diag_mass is the ensemble
/// quadratic variation per unit time, the discrete delta-function strength.
struct CorrelationEstimate {
  std::vector<double> diag, diag_se;          // per step
  double diag_mass = 0.0, diag_mass_se = 0.0; // -> hbar for white noise
  double bin_width = 0.0;
  std::vector<double> lag_center;             // per off-diagonal bin
  std::vector<double> offdiag, offdiag_se;
  std::vector<std::size_t> pair_count;
  std::size_t sample_count = 0;
};

using PathFactory = std::function<NoisePath(std::size_t)>;

CorrelationEstimate estimate_correlation(std::span<const NoisePath> paths, std::size_t max_lag);
CorrelationEstimate estimate_correlation(const PathFactory& path_at, std::size_t m,
                                         std::size_t max_lag, int threads = 0);

/// Ensemble variance of the cumulative sum W(t_k) = sum dW, with the
/// least-squares slope through the origin (-> hbar for white noise).
struct CumsumVariance {
  std::vector<double> t;    // node times (excluding t0)
  std::vector<double> var;
  double slope = 0.0;
  std::size_t sample_count = 0;
};

CumsumVariance cumulative_sum_variance(const PathFactory& path_at, std::size_t m,
                                       int threads = 0);

/// Per-step mean and variance of f over an ensemble, with standard errors.
struct StepMoments {
  std::vector<double> mean_f, se_f;
  std::vector<double> var_f, var_f_se;
  double pooled_var_f = 0.0;
  std::size_t sample_count = 0;
};

StepMoments step_moments(const PathFactory& path_at, std::size_t m, int threads = 0);

/// Sums groups of `ratio` increments into one step (same Brownian path seen on
/// a coarser grid); the step count must be divisible by ratio.
NoisePath coarsen_path(const NoisePath& fine, std::size_t ratio);

}  // namespace hkq
