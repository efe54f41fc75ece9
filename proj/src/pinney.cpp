#include "hkq/pinney.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hkq {

namespace {

struct Deriv {
  double drho;
  double drho_dot;
};

struct QuinticSegment {
  double t0, h;
  double f0, d0, s0;  // value, first, second derivative at left node
  double f1, d1, s1;  // ... at right node

  double value(double t) const {
    const double s = (t - t0) / h;
    const double s2 = s * s, s3 = s2 * s, s4 = s3 * s, s5 = s4 * s;
    const double H0 = 1 - 10 * s3 + 15 * s4 - 6 * s5;
    const double H1 = s - 6 * s3 + 8 * s4 - 3 * s5;
    const double H2 = 0.5 * (s2 - 3 * s3 + 3 * s4 - s5);
    const double K0 = 10 * s3 - 15 * s4 + 6 * s5;
    const double K1 = -4 * s3 + 7 * s4 - 3 * s5;
    const double K2 = 0.5 * (s3 - 2 * s4 + s5);
    return f0 * H0 + d0 * h * H1 + s0 * h * h * H2 + f1 * K0 + d1 * h * K1 + s1 * h * h * K2;
  }

  double deriv(double t) const {
    const double s = (t - t0) / h;
    const double s2 = s * s, s3 = s2 * s, s4 = s3 * s;
    const double H0 = -30 * s2 + 60 * s3 - 30 * s4;
    const double H1 = 1 - 18 * s2 + 32 * s3 - 15 * s4;
    const double H2 = 0.5 * (2 * s - 9 * s2 + 12 * s3 - 5 * s4);
    const double K0 = 30 * s2 - 60 * s3 + 30 * s4;
    const double K1 = -12 * s2 + 28 * s3 - 15 * s4;
    const double K2 = 0.5 * (3 * s2 - 8 * s3 + 5 * s4);
    return (f0 * H0 + d0 * h * H1 + s0 * h * h * H2 + f1 * K0 + d1 * h * K1 + s1 * h * h * K2) / h;
  }

  double deriv2(double t) const {
    const double s = (t - t0) / h;
    const double s2 = s * s, s3 = s2 * s;
    const double H0 = -60 * s + 180 * s2 - 120 * s3;
    const double H1 = -36 * s + 96 * s2 - 60 * s3;
    const double H2 = 1 - 9 * s + 18 * s2 - 10 * s3;
    const double K0 = 60 * s - 180 * s2 + 120 * s3;
    const double K1 = -24 * s + 84 * s2 - 60 * s3;
    const double K2 = 3 * s - 12 * s2 + 10 * s3;
    return (f0 * H0 + d0 * h * H1 + s0 * h * h * H2 + f1 * K0 + d1 * h * K1 + s1 * h * h * K2) /
           (h * h);
  }
};

QuinticSegment quintic_at(std::span<const double> t, std::span<const double> f,
                          std::span<const double> d, std::span<const double> s, std::size_t i) {
  return QuinticSegment{t[i], t[i + 1] - t[i], f[i],     d[i],     s[i],
                        f[i + 1],              d[i + 1], s[i + 1]};
}

// cubic Hermite (value + first derivative at both nodes)
struct CubicSegment {
  double t0, h;
  double f0, d0, f1, d1;

  double value(double t) const {
    const double s = (t - t0) / h;
    const double s2 = s * s, s3 = s2 * s;
    return f0 * (2 * s3 - 3 * s2 + 1) + d0 * h * (s3 - 2 * s2 + s) +
           f1 * (-2 * s3 + 3 * s2) + d1 * h * (s3 - s2);
  }
};

CubicSegment cubic_at(std::span<const double> t, std::span<const double> f,
                      std::span<const double> d, std::size_t i) {
  return CubicSegment{t[i], t[i + 1] - t[i], f[i], d[i], f[i + 1], d[i + 1]};
}

}  // namespace

std::size_t PinneySolution::locate(double t) const {
  if (t < t_.front() || t > t_.back())
    throw std::out_of_range("PinneySolution: t outside solved span");
  auto it = std::upper_bound(t_.begin(), t_.end(), t);
  std::size_t i = (it == t_.begin()) ? 0 : static_cast<std::size_t>(it - t_.begin()) - 1;
  if (i + 1 >= t_.size()) i = t_.size() - 2;
  return i;
}

double PinneySolution::rho(double t) const {
  return quintic_at(t_, rho_, rho_dot_, rho_ddot_, locate(t)).value(t);
}

double PinneySolution::rho_dot(double t) const {
  return quintic_at(t_, rho_dot_, rho_ddot_, rho_d3_, locate(t)).value(t);
}

double PinneySolution::rho_ddot(double t) const {
  return cubic_at(t_, rho_ddot_, rho_d3_, locate(t)).value(t);
}

double pinney_residual(const PinneySolution& sol, const FrequencyProfile& profile, double t) {
  const double r = sol.rho(t);
  return sol.rho_ddot(t) + profile.omega2(t) * r - sol.omega_cap() * sol.omega_cap() / (r * r * r);
}

double default_rho0(const FrequencyProfile& profile, double omega_cap, double t0) {
  const double w2 = profile.omega2(t0);
  const double tiny = 1e-6;
  if (w2 <= 0.0) return 1.0;
  return std::max(std::sqrt(omega_cap / std::sqrt(w2)), tiny);
}

namespace {

// Dormand-Prince 5(4) coefficients.
constexpr double A21 = 1.0 / 5;
constexpr double A31 = 3.0 / 40, A32 = 9.0 / 40;
constexpr double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9;
constexpr double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561,
                 A54 = -212.0 / 729;
constexpr double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176,
                 A65 = -5103.0 / 18656;
constexpr double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784,
                 B6 = 11.0 / 84;
constexpr double E1 = B1 - 5179.0 / 57600, E3 = B3 - 7571.0 / 16695, E4 = B4 - 393.0 / 640,
                 E5 = B5 + 92097.0 / 339200, E6 = B6 - 187.0 / 2100, E7 = -1.0 / 40;
constexpr double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9;

struct SolveResult {
  std::vector<double> t, rho, rho_dot, rho_ddot, rho_d3;
};

SolveResult integrate(const FrequencyProfile& profile, double omega_cap, double rho0,
                      double rho_dot0, double t0, double t1, double rtol, double atol,
                      double defect_tol, const PinneyOptions& opts) {
  const double rho_floor = 10.0 * std::numeric_limits<double>::epsilon() * rho0;
  const double om2cap = omega_cap * omega_cap;
  auto rhs = [&](double t, double r, double rd) -> Deriv {
    if (r <= rho_floor)
      throw InternalConsistencyError("pinney: rho reached zero (numerical blow-up)");
    return Deriv{rd, om2cap / (r * r * r) - profile.omega2(t) * r};
  };
  // rho''' follows by differentiating the equation
  auto third = [&](double t, double r, double rd) {
    const double r2 = r * r;
    return -3.0 * om2cap * rd / (r2 * r2) - profile.omega2_dot(t) * r - profile.omega2(t) * rd;
  };

  SolveResult out;
  double t = t0, r = rho0, rd = rho_dot0;
  Deriv k1 = rhs(t, r, rd);
  out.t.push_back(t);
  out.rho.push_back(r);
  out.rho_dot.push_back(rd);
  out.rho_ddot.push_back(k1.drho_dot);
  out.rho_d3.push_back(third(t, r, rd));

  double h_ctrl = std::min(opts.initial_step, opts.max_step);
  while (t < t1) {
    double h = std::min(h_ctrl, opts.max_step);
    bool end_clamped = false;
    if (t + h >= t1) {
      h = t1 - t;
      end_clamped = true;
    }
    if (!end_clamped && h < opts.min_step)
      throw StiffProfileError("pinney: stiff or singular profile");
    if (t + h == t) throw StiffProfileError("pinney: stiff or singular profile");

    const Deriv k2 = rhs(t + C2 * h, r + h * A21 * k1.drho, rd + h * A21 * k1.drho_dot);
    const Deriv k3 = rhs(t + C3 * h, r + h * (A31 * k1.drho + A32 * k2.drho),
                         rd + h * (A31 * k1.drho_dot + A32 * k2.drho_dot));
    const Deriv k4 = rhs(t + C4 * h, r + h * (A41 * k1.drho + A42 * k2.drho + A43 * k3.drho),
                         rd + h * (A41 * k1.drho_dot + A42 * k2.drho_dot + A43 * k3.drho_dot));
    const Deriv k5 =
        rhs(t + C5 * h, r + h * (A51 * k1.drho + A52 * k2.drho + A53 * k3.drho + A54 * k4.drho),
            rd + h * (A51 * k1.drho_dot + A52 * k2.drho_dot + A53 * k3.drho_dot +
                      A54 * k4.drho_dot));
    const Deriv k6 = rhs(
        t + h,
        r + h * (A61 * k1.drho + A62 * k2.drho + A63 * k3.drho + A64 * k4.drho + A65 * k5.drho),
        rd + h * (A61 * k1.drho_dot + A62 * k2.drho_dot + A63 * k3.drho_dot + A64 * k4.drho_dot +
                  A65 * k5.drho_dot));

    const double r_new = r + h * (B1 * k1.drho + B3 * k3.drho + B4 * k4.drho + B5 * k5.drho +
                                  B6 * k6.drho);
    const double rd_new = rd + h * (B1 * k1.drho_dot + B3 * k3.drho_dot + B4 * k4.drho_dot +
                                    B5 * k5.drho_dot + B6 * k6.drho_dot);
    const Deriv k7 = rhs(t + h, r_new, rd_new);  // FSAL

    const double err_r = h * (E1 * k1.drho + E3 * k3.drho + E4 * k4.drho + E5 * k5.drho +
                              E6 * k6.drho + E7 * k7.drho);
    const double err_rd = h * (E1 * k1.drho_dot + E3 * k3.drho_dot + E4 * k4.drho_dot +
                               E5 * k5.drho_dot + E6 * k6.drho_dot + E7 * k7.drho_dot);
    const double sc_r = atol + rtol * std::max(std::abs(r), std::abs(r_new));
    const double sc_rd = atol + rtol * std::max(std::abs(rd), std::abs(rd_new));
    const double err = std::sqrt(0.5 * ((err_r / sc_r) * (err_r / sc_r) +
                                        (err_rd / sc_rd) * (err_rd / sc_rd)));

    bool accept = err <= 1.0;
    if (accept) {
      // defect control: the dense output must satisfy the equation between
      // the nodes to defect_tol, not just at them
      const double s_new = k7.drho_dot;
      const double th_old = out.rho_d3.back();
      const double th_new = third(t + h, r_new, rd_new);
      const QuinticSegment rho_seg{t, h, r, rd, k1.drho_dot, r_new, rd_new, s_new};
      const CubicSegment dd_seg{t, h, k1.drho_dot, th_old, s_new, th_new};
      for (double frac : {0.211324865405187, 0.5, 0.788675134594813}) {
        const double tt = t + frac * h;
        const double ri = rho_seg.value(tt);
        const double defect =
            dd_seg.value(tt) + profile.omega2(tt) * ri - om2cap / (ri * ri * ri);
        if (std::abs(defect) > defect_tol) {
          accept = false;
          break;
        }
      }
      if (accept) {
        t += h;
        r = r_new;
        rd = rd_new;
        k1 = k7;
        out.t.push_back(t);
        out.rho.push_back(r);
        out.rho_dot.push_back(rd);
        out.rho_ddot.push_back(k1.drho_dot);
        out.rho_d3.push_back(th_new);
      } else {
        h_ctrl = 0.5 * h;  // defect rejection
        continue;
      }
    }
    const double factor =
        std::clamp(0.9 * std::pow(std::max(err, 1e-10), -0.2), 0.2, 5.0);
    if (!end_clamped || err > 1.0) h_ctrl = h * factor;
  }
  return out;
}

}  // namespace

PinneySolution solve_pinney(const FrequencyProfile& profile, double omega_cap, double rho0,
                            double rho_dot0, double t0, double t1, double tol,
                            const PinneyOptions& opts) {
  if (!(omega_cap > 0.0)) throw std::invalid_argument("solve_pinney: Omega must be > 0");
  if (!(rho0 > 0.0)) throw std::invalid_argument("solve_pinney: rho0 must be > 0");
  if (!(tol > 0.0)) throw std::invalid_argument("solve_pinney: tol must be > 0");
  if (!(t1 > t0)) throw std::invalid_argument("solve_pinney: need t1 > t0");

  const double rtol = std::min(1e-2 * tol, 1e-10);
  const double atol = std::min(1e-3 * tol, 1e-12);
  // in-step rejection threshold sits below tol so the final sampled bound holds
  SolveResult raw =
      integrate(profile, omega_cap, rho0, rho_dot0, t0, t1, rtol, atol, 0.8 * tol, opts);

  PinneySolution sol;
  sol.omega_cap_ = omega_cap;
  sol.t_ = std::move(raw.t);
  sol.rho_ = std::move(raw.rho);
  sol.rho_dot_ = std::move(raw.rho_dot);
  sol.rho_ddot_ = std::move(raw.rho_ddot);
  sol.rho_d3_ = std::move(raw.rho_d3);

  for (double r : sol.rho_)
    if (!(r > 0.0)) throw InternalConsistencyError("pinney: non-positive rho at a node");

  double worst = 0.0;
  for (std::size_t i = 0; i + 1 < sol.t_.size(); ++i) {
    const double a = sol.t_[i], b = sol.t_[i + 1];
    for (double frac : {0.12, 0.37, 0.63, 0.88}) {
      const double tt = a + frac * (b - a);
      worst = std::max(worst, std::abs(pinney_residual(sol, profile, tt)));
    }
  }
  sol.residual_bound_ = worst;
  if (worst > tol)
    throw SolverError("solve_pinney: dense-output residual bound not met");
  return sol;
}

}  // namespace hkq
