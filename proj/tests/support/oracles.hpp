// Test-side oracles, kept independent of the implementation paths they check.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

/// Fixed-step RK4 for u'' + w2(t) u = 0, returning (u, u') at t1.
inline std::pair<double, double> linear_tdho_rk4(const std::function<double(double)>& w2,
                                                 double u0, double v0, double t0, double t1,
                                                 std::size_t steps) {
  const double h = (t1 - t0) / double(steps);
  double u = u0, v = v0, t = t0;
  auto f = [&](double tt, double uu, double vv) {
    return std::pair<double, double>{vv, -w2(tt) * uu};
  };
  for (std::size_t s = 0; s < steps; ++s) {
    const auto [k1u, k1v] = f(t, u, v);
    const auto [k2u, k2v] = f(t + h / 2, u + h / 2 * k1u, v + h / 2 * k1v);
    const auto [k3u, k3v] = f(t + h / 2, u + h / 2 * k2u, v + h / 2 * k2v);
    const auto [k4u, k4v] = f(t + h, u + h * k3u, v + h * k3v);
    u += h / 6 * (k1u + 2 * k2u + 2 * k3u + k4u);
    v += h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v);
    t += h;
  }
  return {u, v};
}

/// Closed-form Pinney solution from two linear solutions (superposition rule):
/// rho = sqrt(A u^2 + 2B uv + C v^2) with u(t0)=1, u'(t0)=0, v(t0)=0, v'(t0)=1,
/// A = rho0^2, B = rho0 rho_dot0, C = (Omega^2 + B^2) / A.
inline double pinney_closed_form(const std::function<double(double)>& w2, double omega_cap,
                                 double rho0, double rho_dot0, double t0, double t,
                                 std::size_t steps) {
  const auto [u, ud] = linear_tdho_rk4(w2, 1.0, 0.0, t0, t, steps);
  const auto [v, vd] = linear_tdho_rk4(w2, 0.0, 1.0, t0, t, steps);
  (void)ud;
  (void)vd;
  const double A = rho0 * rho0;
  const double B = rho0 * rho_dot0;
  const double C = (omega_cap * omega_cap + B * B) / A;
  return std::sqrt(A * u * u + 2.0 * B * u * v + C * v * v);
}

/// Polynomial (U1, U2) via real binomial expansion of sum c_m (X + iY)^m,
/// no complex arithmetic: an independent route for the holomorphic evaluator.
inline std::pair<double, double> real_poly_eval(const std::vector<std::pair<double, double>>& c,
                                                double X, double Y) {
  double u1 = 0.0, u2 = 0.0;
  for (std::size_t m = 0; m < c.size(); ++m) {
    // (X + iY)^m = sum_k C(m,k) X^{m-k} (iY)^k
    double re = 0.0, im = 0.0;
    double binom = 1.0;
    for (std::size_t k = 0; k <= m; ++k) {
      const double term = binom * std::pow(X, double(m - k)) * std::pow(Y, double(k));
      switch (k % 4) {
        case 0: re += term; break;
        case 1: im += term; break;
        case 2: re -= term; break;
        case 3: im -= term; break;
      }
      binom = binom * double(m - k) / double(k + 1);
    }
    u1 += c[m].first * re - c[m].second * im;
    u2 += c[m].first * im + c[m].second * re;
  }
  return {u1, u2};
}

}  // namespace oracle
