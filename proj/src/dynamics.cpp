#include "hkq/dynamics.hpp"

#include <cmath>
#include <stdexcept>

#include "hkq/parallel.hpp"

namespace hkq {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr std::size_t kBlock = 1024;

void check_frame(const NoisePath& path, Frame want, const char* who) {
  if (path.frame != want) throw std::invalid_argument(std::string(who) + ": frame mismatch");
}

}  // namespace

Trajectory integrate_em_rescaled(double omega_cap, const NoisePath& path,
                                 const PlanarState& r0) {
  check_frame(path, Frame::Rescaled, "integrate_em_rescaled");
  if (r0.frame != Frame::Rescaled)
    throw std::invalid_argument("integrate_em_rescaled: initial state frame mismatch");
  Trajectory traj;
  traj.frame = Frame::Rescaled;
  traj.omega_cap = omega_cap;
  traj.times = path.times;
  const std::size_t n = path.steps();
  traj.x.resize(n + 1);
  traj.y.resize(n + 1);
  double X = r0.x, Y = r0.y;
  traj.x[0] = X;
  traj.y[0] = Y;
  for (std::size_t k = 0; k < n; ++k) {
    const double dT = path.dt(k);
    const double noise = kInvSqrt2 * path.dw[k];
    const double Xn = X + (-omega_cap * Y) * dT + noise;
    const double Yn = Y + (omega_cap * X) * dT + noise;
    X = Xn;
    Y = Yn;
    traj.x[k + 1] = X;
    traj.y[k + 1] = Y;
  }
  return traj;
}

Trajectory integrate_em_physical(const PinneySolution& pinney, const NoisePath& path,
                                 const PlanarState& r0) {
  check_frame(path, Frame::Physical, "integrate_em_physical");
  if (r0.frame != Frame::Physical)
    throw std::invalid_argument("integrate_em_physical: initial state frame mismatch");
  if (path.times.front() < pinney.t_begin() || path.times.back() > pinney.t_end())
    throw std::invalid_argument("integrate_em_physical: path grid outside Pinney span");
  const double omega_cap = pinney.omega_cap();
  Trajectory traj;
  traj.frame = Frame::Physical;
  traj.omega_cap = omega_cap;
  traj.times = path.times;
  const std::size_t n = path.steps();
  traj.x.resize(n + 1);
  traj.y.resize(n + 1);
  double x = r0.x, y = r0.y;
  traj.x[0] = x;
  traj.y[0] = y;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = path.times[k];
    const double rho = pinney.rho(t);
    const double rho_dot = pinney.rho_dot(t);
    const double inv_rho2 = 1.0 / (rho * rho);
    const double damp = rho_dot / rho;
    const double dt = path.dt(k);
    const double noise = kInvSqrt2 * path.dw[k];
    const double xn = x + ((-omega_cap * y) * inv_rho2 + damp * x) * dt + noise;
    const double yn = y + ((omega_cap * x) * inv_rho2 + damp * y) * dt + noise;
    x = xn;
    y = yn;
    traj.x[k + 1] = x;
    traj.y[k + 1] = y;
  }
  return traj;
}

ItoPrefixSums ito_prefix_sums(double omega_cap, const NoisePath& path) {
  const std::size_t n = path.steps();
  ItoPrefixSums sums;
  sums.plus.resize(n + 1);
  sums.minus.resize(n + 1);
  sums.plus[0] = sums.minus[0] = 0.0;
  double p = 0.0, m = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double phase = omega_cap * path.times[k];
    const double c = std::cos(phase), s = std::sin(phase);
    p += (c + s) * path.dw[k];
    m += (c - s) * path.dw[k];
    sums.plus[k + 1] = p;
    sums.minus[k + 1] = m;
  }
  return sums;
}

namespace {

std::size_t grid_index_of(const NoisePath& path, double T) {
  const auto& t = path.times;
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double scale = std::max(1.0, std::abs(t[k]));
    if (std::abs(t[k] - T) <= 1e-12 * scale) return k;
  }
  throw std::invalid_argument(
      "exact_solution_rescaled: T is not a grid node (interpolation refused)");
}

PlanarState exact_state(double omega_cap, const NoisePath& path, const ItoPrefixSums& sums,
                        double x0, double y0, std::size_t k) {
  const double T = path.times[k];
  const double c = std::cos(omega_cap * T), s = std::sin(omega_cap * T);
  const double ip = sums.plus[k], im = sums.minus[k];
  return PlanarState{
      x0 * c - y0 * s + kInvSqrt2 * (c * ip - s * im),
      y0 * c + x0 * s + kInvSqrt2 * (c * im + s * ip),
      T, Frame::Rescaled};
}

}  // namespace

PlanarState exact_solution_rescaled(double omega_cap, const NoisePath& path, double x0,
                                    double y0, double T) {
  check_frame(path, Frame::Rescaled, "exact_solution_rescaled");
  const std::size_t k = grid_index_of(path, T);
  const ItoPrefixSums sums = ito_prefix_sums(omega_cap, path);
  return exact_state(omega_cap, path, sums, x0, y0, k);
}

Trajectory exact_trajectory_rescaled(double omega_cap, const NoisePath& path, double x0,
                                     double y0) {
  check_frame(path, Frame::Rescaled, "exact_trajectory_rescaled");
  const ItoPrefixSums sums = ito_prefix_sums(omega_cap, path);
  Trajectory traj;
  traj.frame = Frame::Rescaled;
  traj.omega_cap = omega_cap;
  traj.times = path.times;
  traj.x.resize(path.times.size());
  traj.y.resize(path.times.size());
  for (std::size_t k = 0; k < path.times.size(); ++k) {
    const PlanarState st = exact_state(omega_cap, path, sums, x0, y0, k);
    traj.x[k] = st.x;
    traj.y[k] = st.y;
  }
  return traj;
}

namespace {

LinearInvariants invariants_at(double omega_cap, const Trajectory& traj,
                               const ItoPrefixSums& sums, std::size_t k) {
  const double T = traj.times[k];
  const double c = std::cos(omega_cap * T), s = std::sin(omega_cap * T);
  return LinearInvariants{
      traj.x[k] * c + traj.y[k] * s - kInvSqrt2 * sums.plus[k],
      -traj.x[k] * s + traj.y[k] * c - kInvSqrt2 * sums.minus[k]};
}

void check_invariant_inputs(const Trajectory& traj, const NoisePath& path) {
  if (traj.frame != Frame::Rescaled || path.frame != Frame::Rescaled)
    throw std::invalid_argument("compute_invariants: rescaled frame required");
  if (traj.times != path.times)
    throw std::invalid_argument("compute_invariants: trajectory and path grids differ");
}

}  // namespace

LinearInvariants compute_invariants(const Trajectory& traj, const NoisePath& path,
                                    std::size_t k) {
  check_invariant_inputs(traj, path);
  if (k >= traj.size()) throw std::out_of_range("compute_invariants: index out of range");
  const ItoPrefixSums sums = ito_prefix_sums(traj.omega_cap, path);
  return invariants_at(traj.omega_cap, traj, sums, k);
}

std::vector<LinearInvariants> invariants_series(const Trajectory& traj, const NoisePath& path) {
  check_invariant_inputs(traj, path);
  const ItoPrefixSums sums = ito_prefix_sums(traj.omega_cap, path);
  std::vector<LinearInvariants> out(traj.size());
  for (std::size_t k = 0; k < traj.size(); ++k)
    out[k] = invariants_at(traj.omega_cap, traj, sums, k);
  return out;
}

ShortTimeMoments short_time_moments(double omega_cap, const PhysicalConstants& constants,
                                    double x0, double y0, double delta_T, std::size_t m,
                                    uint64_t seed, std::size_t substeps, int threads) {
  constants.validate();
  if (!(delta_T > 0.0)) throw std::invalid_argument("short_time_moments: delta_T must be > 0");
  if (m < 1000) throw std::invalid_argument("short_time_moments: need M >= 1e3");
  if (substeps < 1) throw std::invalid_argument("short_time_moments: substeps >= 1");

  const double dT = delta_T / static_cast<double>(substeps);
  const double c = std::cos(omega_cap * delta_T), s = std::sin(omega_cap * delta_T);
  const double det_x = x0 * c - y0 * s;  // deterministic endpoint, x component

  struct Partial {
    double sum_dx = 0, sum_dx2 = 0, sum_dy = 0, sum_dy2 = 0;
    double sum_nz = 0, sum_nz2 = 0;
    std::size_t count = 0;
  };
  const std::size_t n_blocks = (m + kBlock - 1) / kBlock;
  std::vector<Partial> partials(n_blocks);
  const std::vector<double> grid = uniform_grid(0.0, dT, substeps);

  parallel_blocks(m, kBlock, threads, [&](std::size_t b, std::size_t i0, std::size_t i1) {
    Partial acc;
    for (std::size_t p = i0; p < i1; ++p) {
      const NoisePath path = sample_noise(constants, grid, seed, p, Frame::Rescaled);
      const ItoPrefixSums sums = ito_prefix_sums(omega_cap, path);
      const PlanarState st = exact_state(omega_cap, path, sums, x0, y0, substeps);
      const double dx = st.x - x0;
      const double dy = st.y - y0;
      const double nz = st.x - det_x;  // endpoint minus deterministic rotation
      acc.sum_dx += dx;
      acc.sum_dx2 += dx * dx;
      acc.sum_dy += dy;
      acc.sum_dy2 += dy * dy;
      acc.sum_nz += nz;
      acc.sum_nz2 += nz * nz;
      ++acc.count;
    }
    partials[b] = acc;
  });

  Partial total;
  for (const auto& part : partials) {
    total.sum_dx += part.sum_dx;
    total.sum_dx2 += part.sum_dx2;
    total.sum_dy += part.sum_dy;
    total.sum_dy2 += part.sum_dy2;
    total.sum_nz += part.sum_nz;
    total.sum_nz2 += part.sum_nz2;
    total.count += part.count;
  }

  const double M = static_cast<double>(total.count);
  auto mean_se = [M](double sum, double sum2) {
    const double mean = sum / M;
    const double var = std::max(0.0, (sum2 - M * mean * mean) / (M - 1.0));
    return std::pair<double, double>{mean, std::sqrt(var / M)};
  };

  ShortTimeMoments out;
  out.delta_T = delta_T;
  out.epsilon = std::sqrt(delta_T);
  out.sample_count = total.count;
  std::tie(out.mean_dx, out.se_dx) = mean_se(total.sum_dx, total.sum_dx2);
  std::tie(out.mean_dy, out.se_dy) = mean_se(total.sum_dy, total.sum_dy2);
  const double nz_mean = total.sum_nz / M;
  out.noise_var = std::max(0.0, (total.sum_nz2 - M * nz_mean * nz_mean) / (M - 1.0));
  out.noise_var_se = out.noise_var * std::sqrt(2.0 / (M - 1.0));
  out.expected_dx = -omega_cap * y0 * delta_T;
  out.expected_dy = omega_cap * x0 * delta_T;
  out.expected_noise_var = 0.5 * constants.hbar * delta_T;
  return out;
}

}  // namespace hkq
