#include "hkq/quantization.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

#include "hkq/errors.hpp"

namespace hkq {

namespace {

using Complex = std::complex<double>;

double trapezoid_norm_sq(const std::vector<Complex>& amp, double dx) {
  double acc = 0.0;
  for (std::size_t i = 0; i < amp.size(); ++i) {
    const double w = (i == 0 || i + 1 == amp.size()) ? 0.5 : 1.0;
    acc += w * std::norm(amp[i]);
  }
  return acc * dx;
}

}  // namespace

double WaveFunction::norm() const { return std::sqrt(trapezoid_norm_sq(amp, grid.dx())); }

void WaveFunction::validate() const {
  if (grid.count < 16) throw std::invalid_argument("WaveFunction: grid count must be >= 16");
  if (amp.size() != grid.count)
    throw std::invalid_argument("WaveFunction: amplitude/grid size mismatch");
  for (const auto& a : amp)
    if (!std::isfinite(a.real()) || !std::isfinite(a.imag()))
      throw std::invalid_argument("WaveFunction: non-finite amplitude");
}

WaveFunction build_psi_bar(std::span<const double> u1, std::span<const double> u2,
                           const SpatialGrid& grid, double omega_cap,
                           const PhysicalConstants& constants, double T) {
  constants.validate();
  if (u1.size() != grid.count || u2.size() != grid.count)
    throw std::invalid_argument("build_psi_bar: line samples and grid size mismatch");
  if (!(constants.hbar > 0.0)) throw std::invalid_argument("build_psi_bar: hbar must be > 0");
  WaveFunction wf;
  wf.frame = Frame::Rescaled;
  wf.grid = grid;
  wf.time = T;
  wf.constants = constants;
  wf.amp.resize(grid.count);
  const Complex phase = std::exp(Complex{0.0, -0.5 * omega_cap * T});
  for (std::size_t i = 0; i < grid.count; ++i) {
    const double X = grid.x(i);
    const double gauss = std::exp(-omega_cap * X * X / (2.0 * constants.hbar));
    wf.amp[i] = gauss * phase * Complex{u1[i], u2[i]};
  }
  wf.validate();
  return wf;
}

WaveFunction propagate_schrodinger_ti(const WaveFunction& psi0, double omega_cap, double T_to,
                                      double step) {
  psi0.validate();
  if (psi0.frame != Frame::Rescaled)
    throw std::invalid_argument("propagate_schrodinger_ti: rescaled frame required");
  if (!(step > 0.0)) throw std::invalid_argument("propagate_schrodinger_ti: step must be > 0");
  if (T_to < psi0.time)
    throw std::invalid_argument("propagate_schrodinger_ti: cannot propagate backwards");

  double peak = 0.0;
  for (const auto& a : psi0.amp) peak = std::max(peak, std::abs(a));
  const double edge = std::max(std::abs(psi0.amp.front()), std::abs(psi0.amp.back()));
  if (peak > 0.0 && edge > 1e-12 * peak)
    throw GridTooNarrowError(
        "propagate_schrodinger_ti: boundary amplitude above 1e-12 of peak; widen the grid");

  WaveFunction psi = psi0;
  if (T_to == psi0.time) return psi;

  const std::size_t n = psi.grid.count;
  const double dx = psi.grid.dx();
  const double hbar = psi.constants.hbar;
  const std::size_t n_steps = static_cast<std::size_t>(std::ceil((T_to - psi0.time) / step));
  const double dT = (T_to - psi0.time) / double(n_steps);

  // (I + i dT H / 2hbar) psi^{n+1} = (I - i dT H / 2hbar) psi^n, Dirichlet edges
  const Complex beta{0.0, dT / (2.0 * hbar)};
  const double kin = hbar * hbar / (dx * dx);
  const Complex a_off = beta * (-0.5 * kin);
  std::vector<Complex> a_diag(n), b_diag(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = psi.grid.x(i);
    const double h_ii = kin + 0.5 * omega_cap * omega_cap * x * x;
    a_diag[i] = 1.0 + beta * h_ii;
    b_diag[i] = 1.0 - beta * h_ii;
  }

  const double norm0 = psi.norm();
  std::vector<Complex> rhs(n), cp(n), next(n);
  for (std::size_t s = 0; s < n_steps; ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      Complex v = b_diag[i] * psi.amp[i];
      if (i > 0) v -= a_off * psi.amp[i - 1];
      if (i + 1 < n) v -= a_off * psi.amp[i + 1];
      rhs[i] = v;
    }
    // Thomas solve (constant off-diagonals)
    cp[0] = a_off / a_diag[0];
    next[0] = rhs[0] / a_diag[0];
    for (std::size_t i = 1; i < n; ++i) {
      const Complex denom = a_diag[i] - a_off * cp[i - 1];
      cp[i] = a_off / denom;
      next[i] = (rhs[i] - a_off * next[i - 1]) / denom;
    }
    for (std::size_t i = n - 1; i-- > 0;) next[i] -= cp[i] * next[i + 1];
    psi.amp.swap(next);
  }
  psi.time = T_to;

  const double drift = std::abs(psi.norm() - norm0) / std::max(norm0, 1e-300);
  if (drift > 1e-10)
    throw InternalConsistencyError("propagate_schrodinger_ti: norm drift above 1e-10");
  return psi;
}

SpectralResult eigensolve_ti(double omega_cap, const PhysicalConstants& constants,
                             const SpatialGrid& grid, std::size_t n_eigs) {
  constants.validate();
  if (!(constants.hbar > 0.0)) throw std::invalid_argument("eigensolve_ti: hbar must be > 0");
  if (grid.count < 16) throw std::invalid_argument("eigensolve_ti: grid count must be >= 16");
  if (n_eigs == 0 || n_eigs > grid.count)
    throw std::invalid_argument("eigensolve_ti: bad eigenvalue count");

  const std::size_t n = grid.count;
  const double dx = grid.dx();
  const double hbar = constants.hbar;
  const double kpre = hbar * hbar / (dx * dx);

  // 4th-order 5-point kinetic stencil, psi == 0 outside the grid
  const double c0 = 5.0 / 4.0 * kpre;   // -(hbar^2/2) * (-30/12) / dx^2
  const double c1 = -2.0 / 3.0 * kpre;  // -(hbar^2/2) * ( 16/12) / dx^2
  const double c2 = 1.0 / 24.0 * kpre;  // -(hbar^2/2) * ( -1/12) / dx^2

  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = grid.x(i);
    H(i, i) = c0 + 0.5 * omega_cap * omega_cap * x * x;
    if (i + 1 < n) {
      H(i, i + 1) = c1;
      H(i + 1, i) = c1;
    }
    if (i + 2 < n) {
      H(i, i + 2) = c2;
      H(i + 2, i) = c2;
    }
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(H);
  if (solver.info() != Eigen::Success)
    throw SolverError("eigensolve_ti: eigensolver failed to converge");

  SpectralResult res;
  res.grid = grid;
  res.hbar = hbar;
  res.omega_cap = omega_cap;
  res.eigenvalues.resize(n_eigs);
  res.eigenvectors.resize(n_eigs);
  for (std::size_t k = 0; k < n_eigs; ++k) {
    res.eigenvalues[k] = solver.eigenvalues()(k);
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = solver.eigenvectors()(i, k);
    double nrm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = (i == 0 || i + 1 == n) ? 0.5 : 1.0;
      nrm += w * v[i] * v[i];
    }
    nrm = std::sqrt(nrm * dx);
    double sign = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (std::abs(v[i]) > std::abs(sign)) sign = v[i];
    const double scale = (sign < 0 ? -1.0 : 1.0) / nrm;
    for (auto& vi : v) vi *= scale;
    res.boundary_amplitude =
        std::max({res.boundary_amplitude, std::abs(v.front()), std::abs(v.back())});
    res.eigenvectors[k] = std::move(v);
  }

  const double xedge = std::max(std::abs(grid.min), std::abs(grid.max));
  if (omega_cap * xedge * xedge / (2.0 * hbar) < 20.0)
    res.warning = "grid may be too narrow: Omega X_max^2 / (2 hbar) < 20; boundary amplitude " +
                  std::to_string(res.boundary_amplitude);
  return res;
}

WaveFunction transform_to_physical(const WaveFunction& psi_bar, const TimeWarp& warp, double t) {
  psi_bar.validate();
  if (psi_bar.frame != Frame::Rescaled)
    throw std::invalid_argument("transform_to_physical: rescaled frame required");
  const double T = warp.warp(t);
  if (std::abs(T - psi_bar.time) > 1e-9 * std::max(1.0, std::abs(T)))
    throw std::invalid_argument("transform_to_physical: time stamp does not match warp(t)");

  const double rho = warp.pinney().rho(t);
  const double rho_dot = warp.pinney().rho_dot(t);
  const double hbar = psi_bar.constants.hbar;

  WaveFunction psi;
  psi.frame = Frame::Physical;
  psi.grid = SpatialGrid{psi_bar.grid.min * rho, psi_bar.grid.max * rho, psi_bar.grid.count};
  psi.time = t;
  psi.constants = psi_bar.constants;
  psi.amp.resize(psi_bar.amp.size());
  const double amp_scale = 1.0 / std::sqrt(rho);
  for (std::size_t i = 0; i < psi.amp.size(); ++i) {
    const double x = psi.grid.x(i);
    const Complex chirp = std::exp(Complex{0.0, rho_dot * x * x / (2.0 * hbar * rho)});
    psi.amp[i] = amp_scale * chirp * psi_bar.amp[i];
  }

  const double drift = std::abs(psi.norm() - psi_bar.norm()) / std::max(psi_bar.norm(), 1e-300);
  if (drift > 1e-10)
    throw InternalConsistencyError("transform_to_physical: frame norm equality violated");
  return psi;
}

// ---------------------------------------------------------------------------
// TDHO residual

namespace {

/// 6-point (quintic) Lagrange interpolation on a uniform grid.
Complex interp_quintic(const WaveFunction& wf, double x) {
  const SpatialGrid& g = wf.grid;
  const double dx = g.dx();
  if (x < g.min || x > g.max)
    throw std::invalid_argument("tdho_residual: probe point outside a level grid");
  const double pos = (x - g.min) / dx;
  std::ptrdiff_t i0 = static_cast<std::ptrdiff_t>(std::floor(pos)) - 2;
  i0 = std::clamp<std::ptrdiff_t>(i0, 0, static_cast<std::ptrdiff_t>(g.count) - 6);
  Complex acc{0.0, 0.0};
  for (int a = 0; a < 6; ++a) {
    const std::size_t ia = static_cast<std::size_t>(i0) + a;
    double w = 1.0;
    for (int b = 0; b < 6; ++b) {
      if (a == b) continue;
      const std::size_t ib = static_cast<std::size_t>(i0) + b;
      w *= (pos - double(ib)) / (double(ia) - double(ib));
    }
    acc += w * wf.amp[ia];
  }
  return acc;
}

}  // namespace

ResidualReport tdho_residual(std::span<const WaveFunction> psi_series,
                             const FrequencyProfile& profile, const ResidualOptions& opts) {
  if (psi_series.size() < 3)
    throw std::invalid_argument("tdho_residual: need at least 3 time levels");
  const double dt = psi_series[1].time - psi_series[0].time;
  double half_width = std::numeric_limits<double>::infinity();
  std::size_t min_count = SIZE_MAX;
  const double hbar = psi_series[0].constants.hbar;
  for (std::size_t j = 0; j < psi_series.size(); ++j) {
    const WaveFunction& w = psi_series[j];
    w.validate();
    if (w.frame != Frame::Physical)
      throw std::invalid_argument("tdho_residual: physical frame required");
    if (j > 0 && std::abs((w.time - psi_series[j - 1].time) - dt) > 1e-9 * std::max(1.0, dt))
      throw std::invalid_argument("tdho_residual: time levels not uniform");
    if (w.constants.hbar != hbar)
      throw std::invalid_argument("tdho_residual: inconsistent hbar across levels");
    half_width = std::min(half_width, std::min(-w.grid.min, w.grid.max));
    min_count = std::min(min_count, w.grid.count);
  }
  if (!(half_width > 0.0))
    throw std::invalid_argument("tdho_residual: grids must straddle x = 0");

  const double xp = opts.window * half_width;
  const std::size_t np = opts.probe_count ? opts.probe_count : (3 * min_count) / 4;
  if (np < 8) throw std::invalid_argument("tdho_residual: probe grid too small");
  const double dxp = 2.0 * xp / double(np - 1);

  // all levels on the common probe grid
  std::vector<std::vector<Complex>> levels(psi_series.size(), std::vector<Complex>(np));
  for (std::size_t j = 0; j < psi_series.size(); ++j)
    for (std::size_t i = 0; i < np; ++i)
      levels[j][i] = interp_quintic(psi_series[j], -xp + dxp * double(i));

  ResidualReport rep;
  for (std::size_t j = 1; j + 1 < psi_series.size(); ++j) {
    const double t = psi_series[j].time;
    const double w2 = profile.omega2(t);
    double acc = 0.0;
    for (std::size_t i = 1; i + 1 < np; ++i) {
      const double x = -xp + dxp * double(i);
      const Complex dpsi_dt = (levels[j + 1][i] - levels[j - 1][i]) / (2.0 * dt);
      const Complex d2psi =
          (levels[j][i + 1] - 2.0 * levels[j][i] + levels[j][i - 1]) / (dxp * dxp);
      const Complex res = Complex{0.0, hbar} * dpsi_dt + 0.5 * hbar * hbar * d2psi -
                          0.5 * w2 * x * x * levels[j][i];
      const double wgt = (i == 1 || i + 2 == np) ? 0.5 : 1.0;
      acc += wgt * std::norm(res);
    }
    rep.times.push_back(t);
    rep.norms.push_back(std::sqrt(acc * dxp));
  }
  rep.max_norm = *std::max_element(rep.norms.begin(), rep.norms.end());
  return rep;
}

// ---------------------------------------------------------------------------
// Pipeline and the family of quantizations

std::vector<WaveFunction> run_pipeline_ground_state(const PhysicalConstants& constants,
                                                    double omega_cap, const TimeWarp& warp,
                                                    const PipelineOptions& opts) {
  constants.validate();
  const std::vector<double> ones(opts.grid_X.count, 1.0);
  const std::vector<double> zeros(opts.grid_X.count, 0.0);
  const double T0 = warp.warp(opts.t0);
  WaveFunction psi_bar = build_psi_bar(ones, zeros, opts.grid_X, omega_cap, constants, T0);
  const double n0 = psi_bar.norm();
  for (auto& a : psi_bar.amp) a /= n0;

  std::vector<WaveFunction> out;
  out.reserve(opts.levels);
  for (std::size_t j = 0; j < opts.levels; ++j) {
    const double t = opts.t0 + double(j) * opts.dt;
    const double T = warp.warp(t);
    if (T > psi_bar.time)
      psi_bar = propagate_schrodinger_ti(psi_bar, omega_cap, T, opts.cn_substep);
    out.push_back(transform_to_physical(psi_bar, warp, t));
  }
  return out;
}

namespace {

FamilyObservables observables_of(const std::vector<WaveFunction>& series,
                                 const FrequencyProfile& profile) {
  FamilyObservables obs;
  const ResidualReport rep = tdho_residual(series, profile);
  obs.residual_max = rep.max_norm;
  const WaveFunction& last = series.back();
  double mass = 0.0, mx = 0.0, mxx = 0.0;
  for (std::size_t i = 0; i < last.grid.count; ++i) {
    const double w = (i == 0 || i + 1 == last.grid.count) ? 0.5 : 1.0;
    const double p = w * std::norm(last.amp[i]);
    const double x = last.grid.x(i);
    mass += p;
    mx += p * x;
    mxx += p * x * x;
  }
  obs.mean_x = mx / mass;
  obs.var_x = mxx / mass - obs.mean_x * obs.mean_x;
  return obs;
}

}  // namespace

FamilyReport family_consistency(const FrequencyProfile& profile,
                                const PhysicalConstants& constants, const TimeWarp& warp_a,
                                const TimeWarp& warp_b, const PipelineOptions& opts) {
  if (warp_a.pinney().omega_cap() != warp_b.pinney().omega_cap())
    throw std::invalid_argument("family_consistency: the two solutions must share Omega");
  const double omega_cap = warp_a.pinney().omega_cap();
  const std::vector<WaveFunction> sa =
      run_pipeline_ground_state(constants, omega_cap, warp_a, opts);
  const std::vector<WaveFunction> sb =
      run_pipeline_ground_state(constants, omega_cap, warp_b, opts);

  FamilyReport rep;
  rep.first = observables_of(sa, profile);
  rep.second = observables_of(sb, profile);

  const WaveFunction& fa = sa.back();
  const WaveFunction& fb = sb.back();
  const double hw = 0.75 * std::min(std::min(-fa.grid.min, fa.grid.max),
                                    std::min(-fb.grid.min, fb.grid.max));
  const std::size_t np = std::min(fa.grid.count, fb.grid.count) / 2;
  const double dxp = 2.0 * hw / double(np - 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < np; ++i) {
    const double x = -hw + dxp * double(i);
    const double w = (i == 0 || i + 1 == np) ? 0.5 : 1.0;
    acc += w * std::norm(interp_quintic(fa, x) - interp_quintic(fb, x));
  }
  rep.state_l2_difference = std::sqrt(acc * dxp);
  return rep;
}

}  // namespace hkq
