#include "hkq/mother_field.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "hkq/parallel.hpp"
#include "hkq/rng.hpp"
#include "hkq/stats.hpp"

namespace hkq {

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr std::size_t kBlock = 2048;
using Complex = std::complex<double>;
}  // namespace

HolomorphicField::HolomorphicField(std::vector<Complex> coeffs) : c_(std::move(coeffs)) {
  if (c_.empty()) c_.push_back({0.0, 0.0});
  for (const auto& c : c_)
    if (!std::isfinite(c.real()) || !std::isfinite(c.imag()))
      throw std::invalid_argument("HolomorphicField: non-finite coefficient");
}

HolomorphicField HolomorphicField::monomial(std::size_t degree, Complex coeff) {
  std::vector<Complex> c(degree + 1, Complex{0.0, 0.0});
  c[degree] = coeff;
  return HolomorphicField(std::move(c));
}

Complex HolomorphicField::operator()(Complex z) const {
  Complex acc{0.0, 0.0};
  for (std::size_t m = c_.size(); m-- > 0;) acc = acc * z + c_[m];
  return acc;
}

std::pair<double, double> HolomorphicField::evaluate(double X, double Y) const {
  const Complex g = (*this)(Complex{X, Y});
  return {g.real(), g.imag()};
}

HolomorphicField HolomorphicField::derivative() const {
  if (c_.size() == 1) return HolomorphicField(std::vector<Complex>{Complex{0.0, 0.0}});
  std::vector<Complex> d(c_.size() - 1);
  for (std::size_t m = 1; m < c_.size(); ++m) d[m - 1] = double(m) * c_[m];
  return HolomorphicField(std::move(d));
}

HolomorphicField apply_generator(const HolomorphicField& g, double omega_cap,
                                 const PhysicalConstants& constants) {
  const auto c = g.coeffs();
  const std::size_t n = c.size();
  std::vector<Complex> out(n, Complex{0.0, 0.0});
  const Complex i_omega{0.0, omega_cap};
  const Complex i_half_hbar{0.0, 0.5 * constants.hbar};
  for (std::size_t m = 0; m < n; ++m) {
    out[m] += i_omega * double(m) * c[m];
    if (m + 2 < n) out[m] += i_half_hbar * double((m + 2) * (m + 1)) * c[m + 2];
  }
  return HolomorphicField(std::move(out));
}

HolomorphicField evolve_pde_polynomial(const HolomorphicField& g, double omega_cap,
                                       const PhysicalConstants& constants, double T) {
  constants.validate();
  const auto c = g.coeffs();
  const Eigen::Index n = static_cast<Eigen::Index>(c.size());
  Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(n, n);
  for (Eigen::Index m = 0; m < n; ++m) {
    A(m, m) = Complex{0.0, omega_cap * double(m)};
    if (m + 2 < n) A(m, m + 2) = Complex{0.0, 0.5 * constants.hbar * double((m + 2) * (m + 1))};
  }
  const Eigen::MatrixXcd E = (T * A).exp();
  Eigen::VectorXcd v(n);
  for (Eigen::Index m = 0; m < n; ++m) v(m) = c[m];
  const Eigen::VectorXcd w = E * v;
  std::vector<Complex> out(c.size());
  for (Eigen::Index m = 0; m < n; ++m) out[m] = w(m);
  return HolomorphicField(std::move(out));
}

GridField sample_grid_field(const HolomorphicField& field, const Grid2D& grid, double time) {
  GridField out;
  out.grid = grid;
  out.time = time;
  out.u1.resize(grid.size());
  out.u2.resize(grid.size());
  for (std::size_t j = 0; j < grid.ny; ++j)
    for (std::size_t i = 0; i < grid.nx; ++i) {
      const auto [u1, u2] = field.evaluate(grid.x(i), grid.y(j));
      out.u1[grid.idx(i, j)] = u1;
      out.u2[grid.idx(i, j)] = u2;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Monte-Carlo push-forward

namespace {

struct PointPartial {
  double s1 = 0, s1q = 0, s2 = 0, s2q = 0;
};

AveragedField run_pushforward(const HolomorphicField& field, double omega_cap,
                              const PhysicalConstants& constants, double T, const Grid2D& grid,
                              std::size_t m, uint64_t seed, std::size_t substeps, int threads) {
  const std::size_t npts = grid.size();
  const std::size_t total = npts * m;
  const double dT = T / double(substeps);
  const double noise_scale = std::sqrt(constants.hbar * dT);

  const std::size_t n_blocks = (total + kBlock - 1) / kBlock;
  std::vector<std::vector<PointPartial>> partials(n_blocks);

  parallel_blocks(total, kBlock, threads, [&](std::size_t b, std::size_t i0, std::size_t i1) {
    std::vector<PointPartial> acc(npts);
    for (std::size_t item = i0; item < i1; ++item) {
      const std::size_t pt = item / m;
      double X = grid.x(pt % grid.nx);
      double Y = grid.y(pt / grid.nx);
      NormalStream rng(seed, item);
      for (std::size_t k = 0; k < substeps; ++k) {
        const double dw = noise_scale * rng.next();
        const double noise = kInvSqrt2 * dw;
        const double Xn = X + (-omega_cap * Y) * dT + noise;
        const double Yn = Y + (omega_cap * X) * dT + noise;
        X = Xn;
        Y = Yn;
      }
      const auto [u1, u2] = field.evaluate(X, Y);
      acc[pt].s1 += u1;
      acc[pt].s1q += u1 * u1;
      acc[pt].s2 += u2;
      acc[pt].s2q += u2 * u2;
    }
    partials[b] = std::move(acc);
  });

  std::vector<PointPartial> total_acc(npts);
  for (const auto& part : partials)
    for (std::size_t p = 0; p < npts; ++p) {
      total_acc[p].s1 += part[p].s1;
      total_acc[p].s1q += part[p].s1q;
      total_acc[p].s2 += part[p].s2;
      total_acc[p].s2q += part[p].s2q;
    }

  AveragedField out;
  out.grid = grid;
  out.time = T;
  out.sample_count = m;
  out.em_substeps = substeps;
  out.u1_mean.resize(npts);
  out.u1_se.resize(npts);
  out.u2_mean.resize(npts);
  out.u2_se.resize(npts);
  const double M = double(m);
  for (std::size_t p = 0; p < npts; ++p) {
    const double m1 = total_acc[p].s1 / M;
    const double m2 = total_acc[p].s2 / M;
    const double v1 = std::max(0.0, (total_acc[p].s1q - M * m1 * m1) / (M - 1.0));
    const double v2 = std::max(0.0, (total_acc[p].s2q - M * m2 * m2) / (M - 1.0));
    out.u1_mean[p] = m1;
    out.u1_se[p] = std::sqrt(v1 / M);
    out.u2_mean[p] = m2;
    out.u2_se[p] = std::sqrt(v2 / M);
  }
  return out;
}

AveragedField noise_free_pushforward(const HolomorphicField& field, double omega_cap, double T,
                                     const Grid2D& grid, std::size_t m) {
  // With hbar = 0 the flow is exactly a rotation by Omega T; no sampling.
  AveragedField out;
  out.grid = grid;
  out.time = T;
  out.sample_count = m;
  out.em_substeps = 0;
  const std::size_t npts = grid.size();
  out.u1_mean.resize(npts);
  out.u1_se.assign(npts, 0.0);
  out.u2_mean.resize(npts);
  out.u2_se.assign(npts, 0.0);
  const double c = std::cos(omega_cap * T), s = std::sin(omega_cap * T);
  for (std::size_t j = 0; j < grid.ny; ++j)
    for (std::size_t i = 0; i < grid.nx; ++i) {
      const double X = grid.x(i), Y = grid.y(j);
      const auto [u1, u2] = field.evaluate(X * c - Y * s, Y * c + X * s);
      out.u1_mean[grid.idx(i, j)] = u1;
      out.u2_mean[grid.idx(i, j)] = u2;
    }
  return out;
}

}  // namespace

AveragedField pushforward_mc(const HolomorphicField& field, double omega_cap,
                             const PhysicalConstants& constants, double T, const Grid2D& grid,
                             std::size_t m, uint64_t seed, const PushforwardOptions& opts) {
  constants.validate();
  if (!(T > 0.0)) throw std::invalid_argument("pushforward_mc: T must be > 0");
  if (m < 100) throw std::invalid_argument("pushforward_mc: need M >= 100");
  if (constants.hbar == 0.0) return noise_free_pushforward(field, omega_cap, T, grid, m);

  std::size_t K = opts.substeps;
  AveragedField prev = run_pushforward(field, omega_cap, constants, T, grid, m, seed, K,
                                       opts.threads);
  if (!opts.auto_refine) return prev;
  while (2 * K <= opts.max_substeps) {
    K *= 2;
    AveragedField next = run_pushforward(field, omega_cap, constants, T, grid, m, seed, K,
                                         opts.threads);
    bool settled = true;
    for (std::size_t p = 0; p < grid.size() && settled; ++p) {
      if (std::abs(next.u1_mean[p] - prev.u1_mean[p]) > 0.25 * next.u1_se[p] + 1e-15)
        settled = false;
      if (std::abs(next.u2_mean[p] - prev.u2_mean[p]) > 0.25 * next.u2_se[p] + 1e-15)
        settled = false;
    }
    prev = std::move(next);
    if (settled) break;
  }
  return prev;
}

// ---------------------------------------------------------------------------
// Grid evolver (method of lines, RK4)

namespace {

struct PairField {
  std::vector<double> u1, u2;
};

void grid_rhs(const Grid2D& g, double omega_cap, double hbar, const PairField& in,
              PairField& out) {
  const double dx = g.dx();
  const double inv2dx = 1.0 / (2.0 * dx);
  const double invdx2 = 1.0 / (dx * dx);
  const std::size_t nx = g.nx;
  for (std::size_t j = 0; j < g.ny; ++j) {
    const double Y = g.y(j);
    const std::size_t row = j * nx;
    auto d1 = [&](const std::vector<double>& u, std::size_t i) {
      if (i == 0) return (-3.0 * u[row] + 4.0 * u[row + 1] - u[row + 2]) * inv2dx;
      if (i == nx - 1)
        return (3.0 * u[row + i] - 4.0 * u[row + i - 1] + u[row + i - 2]) * inv2dx;
      return (u[row + i + 1] - u[row + i - 1]) * inv2dx;
    };
    auto d2 = [&](const std::vector<double>& u, std::size_t i) {
      if (i == 0)
        return (2.0 * u[row] - 5.0 * u[row + 1] + 4.0 * u[row + 2] - u[row + 3]) * invdx2;
      if (i == nx - 1)
        return (2.0 * u[row + i] - 5.0 * u[row + i - 1] + 4.0 * u[row + i - 2] -
                u[row + i - 3]) *
               invdx2;
      return (u[row + i + 1] - 2.0 * u[row + i] + u[row + i - 1]) * invdx2;
    };
    for (std::size_t i = 0; i < nx; ++i) {
      const double X = g.x(i);
      const double du1 = d1(in.u1, i), du2 = d1(in.u2, i);
      const double dd1 = d2(in.u1, i), dd2 = d2(in.u2, i);
      out.u1[row + i] = -omega_cap * (X * du2 + Y * du1) - 0.5 * hbar * dd2;
      out.u2[row + i] = omega_cap * (X * du1 - Y * du2) + 0.5 * hbar * dd1;
    }
  }
}

}  // namespace

GridField evolve_pde_grid(const GridField& initial, double omega_cap,
                          const PhysicalConstants& constants, double T, double step) {
  constants.validate();
  const Grid2D& g = initial.grid;
  if (g.nx < 4 || g.ny < 1) throw std::invalid_argument("evolve_pde_grid: grid too small");
  if (initial.u1.size() != g.size() || initial.u2.size() != g.size())
    throw std::invalid_argument("evolve_pde_grid: field/grid size mismatch");
  if (!(T > 0.0)) throw std::invalid_argument("evolve_pde_grid: T must be > 0");

  const double dx = g.dx();
  const double zmax = std::max({std::abs(g.xmin), std::abs(g.xmax)}) +
                      std::max({std::abs(g.ymin), std::abs(g.ymax)});
  const double rate = 2.0 * constants.hbar / (dx * dx) + std::abs(omega_cap) * zmax / dx;
  const double bound = 2.0 / rate;
  if (step > bound) {
    throw CflError("evolve_pde_grid: step " + std::to_string(step) +
                   " exceeds stability bound " + std::to_string(bound));
  }
  const double dt_want = step > 0.0 ? step : 0.5 * bound;
  const std::size_t n_steps = static_cast<std::size_t>(std::ceil(T / dt_want));
  const double dt = T / double(n_steps);

  PairField u{initial.u1, initial.u2};
  PairField k1{std::vector<double>(g.size()), std::vector<double>(g.size())};
  PairField k2 = k1, k3 = k1, k4 = k1, tmp = k1;
  double umax0 = 0.0;
  for (double v : u.u1) umax0 = std::max(umax0, std::abs(v));
  for (double v : u.u2) umax0 = std::max(umax0, std::abs(v));

  for (std::size_t s = 0; s < n_steps; ++s) {
    grid_rhs(g, omega_cap, constants.hbar, u, k1);
    for (std::size_t p = 0; p < g.size(); ++p) {
      tmp.u1[p] = u.u1[p] + 0.5 * dt * k1.u1[p];
      tmp.u2[p] = u.u2[p] + 0.5 * dt * k1.u2[p];
    }
    grid_rhs(g, omega_cap, constants.hbar, tmp, k2);
    for (std::size_t p = 0; p < g.size(); ++p) {
      tmp.u1[p] = u.u1[p] + 0.5 * dt * k2.u1[p];
      tmp.u2[p] = u.u2[p] + 0.5 * dt * k2.u2[p];
    }
    grid_rhs(g, omega_cap, constants.hbar, tmp, k3);
    for (std::size_t p = 0; p < g.size(); ++p) {
      tmp.u1[p] = u.u1[p] + dt * k3.u1[p];
      tmp.u2[p] = u.u2[p] + dt * k3.u2[p];
    }
    grid_rhs(g, omega_cap, constants.hbar, tmp, k4);
    for (std::size_t p = 0; p < g.size(); ++p) {
      u.u1[p] += dt / 6.0 * (k1.u1[p] + 2 * k2.u1[p] + 2 * k3.u1[p] + k4.u1[p]);
      u.u2[p] += dt / 6.0 * (k1.u2[p] + 2 * k2.u2[p] + 2 * k3.u2[p] + k4.u2[p]);
    }
    if ((s & 31u) == 31u) {
      double umax = 0.0;
      for (double v : u.u1) umax = std::max(umax, std::abs(v));
      if (umax > 1e6 * std::max(umax0, 1.0))
        throw SolverError("evolve_pde_grid: solution diverged (boundary instability)");
    }
  }

  GridField out;
  out.grid = g;
  out.time = initial.time + T;
  out.u1 = std::move(u.u1);
  out.u2 = std::move(u.u2);
  return out;
}

// ---------------------------------------------------------------------------
// Harmonicity

HarmonicityReport harmonicity_residual(const AveragedField& avg) {
  const Grid2D& g = avg.grid;
  if (g.nx < 3 || g.ny < 3)
    throw std::invalid_argument("harmonicity_residual: need at least a 3x3 grid");
  const double dx2 = g.dx() * g.dx();
  const double dy2 = g.dy() * g.dy();

  auto lap = [&](const std::vector<double>& u, std::size_t i, std::size_t j) {
    return (u[g.idx(i + 1, j)] - 2 * u[g.idx(i, j)] + u[g.idx(i - 1, j)]) / dx2 +
           (u[g.idx(i, j + 1)] - 2 * u[g.idx(i, j)] + u[g.idx(i, j - 1)]) / dy2;
  };
  auto lap_se = [&](const std::vector<double>& se, std::size_t i, std::size_t j) {
    const double cx = 1.0 / dx2, cy = 1.0 / dy2, cc = 2.0 / dx2 + 2.0 / dy2;
    const double e = cx * cx * (se[g.idx(i + 1, j)] * se[g.idx(i + 1, j)] +
                                se[g.idx(i - 1, j)] * se[g.idx(i - 1, j)]) +
                     cy * cy * (se[g.idx(i, j + 1)] * se[g.idx(i, j + 1)] +
                                se[g.idx(i, j - 1)] * se[g.idx(i, j - 1)]) +
                     cc * cc * se[g.idx(i, j)] * se[g.idx(i, j)];
    return std::sqrt(e);
  };
  // fourth central difference with the window clamped into the grid
  auto fourth = [&](const std::vector<double>& u, std::size_t i, std::size_t j, bool along_x) {
    const std::size_t n = along_x ? g.nx : g.ny;
    if (n < 5) return 0.0;
    std::size_t c = along_x ? i : j;
    c = std::clamp<std::size_t>(c, 2, n - 3);
    auto at = [&](std::size_t q) { return along_x ? u[g.idx(q, j)] : u[g.idx(i, q)]; };
    return at(c - 2) - 4 * at(c - 1) + 6 * at(c) - 4 * at(c + 1) + at(c + 2);
  };

  HarmonicityReport rep;
  for (std::size_t j = 1; j + 1 < g.ny; ++j)
    for (std::size_t i = 1; i + 1 < g.nx; ++i) {
      rep.i.push_back(i);
      rep.j.push_back(j);
      const double l1 = lap(avg.u1_mean, i, j);
      const double l2 = lap(avg.u2_mean, i, j);
      const double se1 = lap_se(avg.u1_se, i, j);
      const double se2 = lap_se(avg.u2_se, i, j);
      const double st1 = std::abs(fourth(avg.u1_mean, i, j, true)) / (12.0 * dx2) +
                         std::abs(fourth(avg.u1_mean, i, j, false)) / (12.0 * dy2);
      const double st2 = std::abs(fourth(avg.u2_mean, i, j, true)) / (12.0 * dx2) +
                         std::abs(fourth(avg.u2_mean, i, j, false)) / (12.0 * dy2);
      rep.lap_u1.push_back(l1);
      rep.lap_u2.push_back(l2);
      rep.budget_u1.push_back(4.0 * (se1 + st1));
      rep.budget_u2.push_back(4.0 * (se2 + st2));
      const double r1 = rep.budget_u1.back() > 0 ? std::abs(l1) / rep.budget_u1.back() : 0.0;
      const double r2 = rep.budget_u2.back() > 0 ? std::abs(l2) / rep.budget_u2.back() : 0.0;
      rep.worst_ratio = std::max({rep.worst_ratio, r1, r2});
    }
  return rep;
}

// ---------------------------------------------------------------------------
// Short-time expansion check

ShortTimeFieldCheck short_time_field_check(const HolomorphicField& field, double omega_cap,
                                           const PhysicalConstants& constants, double delta_T,
                                           std::size_t m, uint64_t seed, int threads) {
  constants.validate();
  if (!(delta_T > 0.0))
    throw std::invalid_argument("short_time_field_check: delta_T must be > 0");
  if (std::abs(omega_cap) * delta_T >= 0.1)
    throw std::invalid_argument("short_time_field_check: need Omega * delta_T < 0.1");
  if (m < 100) throw std::invalid_argument("short_time_field_check: need M >= 100");

  // exact Gaussian transition kernel of the rescaled dynamics over delta_T
  const double h = constants.hbar;
  double var_p, var_m, cov;
  if (omega_cap == 0.0) {
    var_p = var_m = cov = h * delta_T;
  } else {
    const double w = 2.0 * omega_cap;
    var_p = h * (delta_T + (1.0 - std::cos(w * delta_T)) / w);
    var_m = h * (delta_T - (1.0 - std::cos(w * delta_T)) / w);
    cov = h * std::sin(w * delta_T) / w;
  }
  const double a = std::sqrt(std::max(var_p, 0.0));
  const double b = a > 0 ? cov / a : 0.0;
  const double c = std::sqrt(std::max(var_m - b * b, 0.0));
  const double cd = std::cos(omega_cap * delta_T), sd = std::sin(omega_cap * delta_T);

  const HolomorphicField hg = apply_generator(field, omega_cap, constants);
  const HolomorphicField h2g = apply_generator(hg, omega_cap, constants);
  const HolomorphicField h3g = apply_generator(h2g, omega_cap, constants);

  ShortTimeFieldCheck rep;
  rep.delta_T = delta_T;
  rep.sample_count = m;
  rep.mc_passed = true;

  for (double py : {-1.0, 0.0, 1.0})
    for (double px : {-1.0, 0.0, 1.0}) {
      rep.px.push_back(px);
      rep.py.push_back(py);
      const std::size_t pt = rep.px.size() - 1;

      const std::size_t n_blocks = (m + kBlock - 1) / kBlock;
      std::vector<PointPartial> partials(n_blocks);
      parallel_blocks(m, kBlock, threads, [&](std::size_t blk, std::size_t i0, std::size_t i1) {
        PointPartial acc;
        for (std::size_t p = i0; p < i1; ++p) {
          NormalStream rng(seed, pt * m + p);
          const double z1 = rng.next(), z2 = rng.next();
          const double ip = a * z1;
          const double im = b * z1 + c * z2;
          const double X = px * cd - py * sd + kInvSqrt2 * (cd * ip - sd * im);
          const double Y = py * cd + px * sd + kInvSqrt2 * (cd * im + sd * ip);
          const auto [u1, u2] = field.evaluate(X, Y);
          acc.s1 += u1;
          acc.s1q += u1 * u1;
          acc.s2 += u2;
          acc.s2q += u2 * u2;
        }
        partials[blk] = acc;
      });
      PointPartial tot;
      for (const auto& part : partials) {
        tot.s1 += part.s1;
        tot.s1q += part.s1q;
        tot.s2 += part.s2;
        tot.s2q += part.s2q;
      }
      const double M = double(m);
      const double m1 = tot.s1 / M, m2 = tot.s2 / M;
      const double se1 =
          std::sqrt(std::max(0.0, (tot.s1q - M * m1 * m1) / (M - 1.0)) / M);
      const double se2 =
          std::sqrt(std::max(0.0, (tot.s2q - M * m2 * m2) / (M - 1.0)) / M);

      const auto [u1, u2] = field.evaluate(px, py);
      const auto [g1, g2] = hg.evaluate(px, py);
      const double rem = 0.5 * std::abs(h2g(Complex{px, py})) * delta_T * delta_T +
                         std::abs(h3g(Complex{px, py})) / 6.0 * delta_T * delta_T * delta_T;
      const double dev1 = std::abs(m1 - u1 - delta_T * g1);
      const double dev2 = std::abs(m2 - u2 - delta_T * g2);
      const double tol1 = 4.0 * se1 + rem;
      const double tol2 = 4.0 * se2 + rem;
      rep.dev_u1.push_back(dev1);
      rep.tol_u1.push_back(tol1);
      rep.dev_u2.push_back(dev2);
      rep.tol_u2.push_back(tol2);
      if (dev1 > tol1 || dev2 > tol2) rep.mc_passed = false;
    }

  const GeneratorConsistency gen = generator_consistency(field, omega_cap, constants, delta_T);
  rep.generator_slope = gen.slope;
  rep.generator_r2 = gen.r2;
  return rep;
}

GeneratorConsistency generator_consistency(const HolomorphicField& field, double omega_cap,
                                           const PhysicalConstants& constants, double delta_T) {
  constants.validate();
  if (!(delta_T > 0.0))
    throw std::invalid_argument("generator_consistency: delta_T must be > 0");
  const HolomorphicField hg = apply_generator(field, omega_cap, constants);
  std::vector<double> hs, ds;
  for (int j = 0; j < 6; ++j) {
    const double dT = delta_T / double(1u << j);
    const HolomorphicField evolved = evolve_pde_polynomial(field, omega_cap, constants, dT);
    double worst = 0.0;
    const auto ce = evolved.coeffs();
    const auto c0 = field.coeffs();
    const auto cg = hg.coeffs();
    for (std::size_t q = 0; q < ce.size(); ++q) {
      const Complex fd = (ce[q] - c0[q]) / dT;
      worst = std::max(worst, std::abs(fd - cg[q]));
    }
    if (worst > 0.0) {
      hs.push_back(dT);
      ds.push_back(worst);
    }
  }
  GeneratorConsistency out;
  if (hs.size() >= 3) {
    const LineFit fit = fit_loglog(hs, ds);
    out.slope = fit.slope;
    out.r2 = fit.r2;
  } else {
    out.exact = true;  // defect identically zero (nilpotent generator on this field)
  }
  return out;
}

}  // namespace hkq
