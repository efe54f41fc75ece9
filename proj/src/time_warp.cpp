#include "hkq/time_warp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "hkq/parallel.hpp"

namespace hkq {

namespace {

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa,
                        double fm, double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol)
    return left + right + delta / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace

double TimeWarp::integrate(double a, double b) const {
  if (a == b) return 0.0;
  std::function<double(double)> f = [this](double t) {
    const double r = sol_.rho(t);
    return 1.0 / (r * r);
  };
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  const double tol = rel_tol_ * std::max(std::abs(whole), (b - a));
  return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 48);
}

TimeWarp::TimeWarp(PinneySolution sol, double rel_tol)
    : sol_(std::move(sol)), rel_tol_(rel_tol) {
  const auto grid = sol_.grid();
  T_.resize(grid.size());
  T_[0] = 0.0;
  KahanSum acc;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    acc.add(integrate(grid[i], grid[i + 1]));
    T_[i + 1] = acc.value();
  }
}

double TimeWarp::warp(double t) const {
  if (t < t_begin() || t > t_end()) throw std::out_of_range("warp_time: t outside span");
  const std::size_t i = sol_.locate(t);
  return T_[i] + integrate(sol_.grid()[i], t);
}

double TimeWarp::unwarp(double T) const {
  if (T < 0.0 || T > T_end()) throw std::out_of_range("unwarp_time: T outside range");
  auto it = std::upper_bound(T_.begin(), T_.end(), T);
  std::size_t i = (it == T_.begin()) ? 0 : static_cast<std::size_t>(it - T_.begin()) - 1;
  if (i + 1 >= T_.size()) i = T_.size() - 2;

  double lo = sol_.grid()[i], hi = sol_.grid()[i + 1];
  double t = 0.5 * (lo + hi);
  const double scale = std::max(1.0, T_end());
  for (int iter = 0; iter < 100; ++iter) {
    const double g = T_[i] + integrate(sol_.grid()[i], t) - T;
    if (std::abs(g) <= 1e-14 * scale) break;
    if (g > 0)
      hi = t;
    else
      lo = t;
    const double r = sol_.rho(t);
    double step = t - g * r * r;  // Newton: dT/dt = 1/rho^2
    t = (step > lo && step < hi) ? step : 0.5 * (lo + hi);
  }
  return t;
}

}  // namespace hkq
