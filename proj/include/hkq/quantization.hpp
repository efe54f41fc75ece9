#pragma once

#include <complex>
#include <span>
#include <string>
#include <vector>

#include "hkq/constants.hpp"
#include "hkq/frequency_profile.hpp"
#include "hkq/time_warp.hpp"

namespace hkq {

struct SpatialGrid {
  double min = -12.0;
  double max = 12.0;
  std::size_t count = 1024;

  double dx() const { return (max - min) / double(count - 1); }
  double x(std::size_t i) const { return min + dx() * double(i); }
};

/// Complex amplitudes on a uniform spatial grid, in either frame.
struct WaveFunction {
  Frame frame = Frame::Rescaled;
  SpatialGrid grid;
  std::vector<std::complex<double>> amp;
  double time = 0.0;
  PhysicalConstants constants;

  double norm() const;  // trapezoid L2
  void validate() const;
};

/// psi_bar(X,T) = exp(-Omega X^2 / (2 hbar) - i Omega T / 2) (U1 + i U2)
/// on the Y = 0 line. The Gaussian factor uses Omega, which is what maps
/// U = const to the ground state of the rescaled-frame oscillator.
WaveFunction build_psi_bar(std::span<const double> u1, std::span<const double> u2,
                           const SpatialGrid& grid, double omega_cap,
                           const PhysicalConstants& constants, double T);

/// Crank-Nicolson propagation of i hbar dpsi/dT = (-(hbar^2/2) d^2/dX^2
/// + Omega^2 X^2 / 2) psi (unit mass). Unconditionally unitary; the L2 norm
/// is conserved to 1e-10 relative per run, which is asserted internally.
/// Requires |psi| < 1e-12 relative at the grid edges.
WaveFunction propagate_schrodinger_ti(const WaveFunction& psi0, double omega_cap, double T_to,
                                      double step);

struct SpectralResult {
  std::vector<double> eigenvalues;               // ascending
  std::vector<std::vector<double>> eigenvectors; // L2-normalized grid functions
  SpatialGrid grid;
  double hbar = 1.0;
  double omega_cap = 1.0;
  std::string warning;         // set when the grid looks too narrow
  double boundary_amplitude = 0.0;
};

/// Lowest eigenvalues of the discretized rescaled-frame Hamiltonian
/// (4th-order 5-point stencil, Dirichlet at the edges); E_n -> hbar Omega (n + 1/2).
SpectralResult eigensolve_ti(double omega_cap, const PhysicalConstants& constants,
                             const SpatialGrid& grid, std::size_t n_eigs);

/// psi(x,t) = rho^{-1/2} exp(i rho' x^2 / (2 hbar rho)) psi_bar(x/rho, T(t))
/// on the moved grid x = rho(t) X. Preserves the L2 norm exactly up to roundoff.
WaveFunction transform_to_physical(const WaveFunction& psi_bar, const TimeWarp& warp, double t);

struct ResidualOptions {
  double window = 0.75;        // probe half-width as a fraction of the narrowest grid
  std::size_t probe_count = 0; // 0: 3/4 of the narrowest level count
};

/// Discrete residual of i hbar dpsi/dt + (hbar^2/2) d^2 psi/dx^2
/// - (omega^2(t) x^2 / 2) psi on a common probe grid (6-point quintic
/// Lagrange interpolation from the per-level grids), one weighted L2 norm per
/// interior time level.
struct ResidualReport {
  std::vector<double> times;   // interior levels
  std::vector<double> norms;
  double max_norm = 0.0;
};

ResidualReport tdho_residual(std::span<const WaveFunction> psi_series,
                             const FrequencyProfile& profile, const ResidualOptions& = {});

struct PipelineOptions {
  SpatialGrid grid_X;           // rescaled-frame grid
  double t0 = 0.0;
  double dt = 0.04;             // physical-time spacing of the output levels
  std::size_t levels = 5;
  double cn_substep = 0.01;     // Crank-Nicolson step in T
};

/// Ground-state-seeded end-to-end run: U = (1, 0) -> psi_bar(X, 0) ->
/// Crank-Nicolson in T -> physical-frame psi(x, t_j) at uniform t_j.
std::vector<WaveFunction> run_pipeline_ground_state(const PhysicalConstants& constants,
                                                    double omega_cap, const TimeWarp& warp,
                                                    const PipelineOptions& opts);

struct FamilyObservables {
  double mean_x = 0.0;     // <x> of |psi|^2 at the final level
  double var_x = 0.0;
  double residual_max = 0.0;
};

/// Runs the pipeline with two different Pinney solutions for the same profile
/// and compares the produced physical states; both must be residual-convergent,
/// the states themselves are not claimed to coincide.
struct FamilyReport {
  FamilyObservables first, second;
  double state_l2_difference = 0.0;  // at the final level, on the common probe grid
};

FamilyReport family_consistency(const FrequencyProfile& profile,
                                const PhysicalConstants& constants, const TimeWarp& warp_a,
                                const TimeWarp& warp_b, const PipelineOptions& opts);

}  // namespace hkq
