#include "hkq/frequency_profile.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hkq {

FrequencyProfile FrequencyProfile::constant(double omega0) {
  if (!std::isfinite(omega0)) throw std::invalid_argument("constant profile: omega0 not finite");
  return FrequencyProfile(Constant{omega0});
}

FrequencyProfile FrequencyProfile::modulated(double omega0, double eps, double gamma) {
  if (!std::isfinite(omega0) || !std::isfinite(eps) || !std::isfinite(gamma))
    throw std::invalid_argument("modulated profile: parameters not finite");
  return FrequencyProfile(Modulated{omega0, eps, gamma});
}

namespace {

// Fritsch-Carlson monotone cubic slopes.
std::vector<double> pchip_slopes(const std::vector<double>& t, const std::vector<double>& y) {
  const std::size_t n = t.size();
  std::vector<double> d(n, 0.0);
  if (n == 1) return d;
  std::vector<double> h(n - 1), delta(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = t[i + 1] - t[i];
    delta[i] = (y[i + 1] - y[i]) / h[i];
  }
  if (n == 2) {
    d[0] = d[1] = delta[0];
    return d;
  }
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (delta[i - 1] * delta[i] <= 0.0) {
      d[i] = 0.0;
    } else {
      const double w1 = 2.0 * h[i] + h[i - 1];
      const double w2 = h[i] + 2.0 * h[i - 1];
      d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
    }
  }
  auto endpoint = [](double h0, double h1, double d0, double d1) {
    double s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (s * d0 <= 0.0)
      s = 0.0;
    else if (d0 * d1 < 0.0 && std::abs(s) > 3.0 * std::abs(d0))
      s = 3.0 * d0;
    return s;
  };
  d[0] = endpoint(h[0], h[1], delta[0], delta[1]);
  d[n - 1] = endpoint(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
  return d;
}

}  // namespace

FrequencyProfile FrequencyProfile::tabulated(std::vector<double> t, std::vector<double> omega2) {
  if (t.size() < 2) throw std::invalid_argument("tabulated profile: need at least 2 samples");
  if (t.size() != omega2.size())
    throw std::invalid_argument("tabulated profile: t and omega2 length mismatch");
  for (std::size_t i = 0; i + 1 < t.size(); ++i)
    if (!(t[i] < t[i + 1]))
      throw std::invalid_argument("tabulated profile: times must be strictly increasing");
  for (double w2 : omega2)
    if (!std::isfinite(w2)) throw std::invalid_argument("tabulated profile: omega2 not finite");
  Tabulated tab{std::move(t), std::move(omega2), {}};
  tab.slope = pchip_slopes(tab.t, tab.omega2);
  return FrequencyProfile(std::move(tab));
}

double FrequencyProfile::omega2(double t) const {
  if (const auto* c = as_constant()) return c->omega0 * c->omega0;
  if (const auto* m = as_modulated())
    return m->omega0 * m->omega0 * (1.0 + m->eps * std::cos(m->gamma * t));
  const auto& tab = std::get<Tabulated>(data_);
  if (t < tab.t.front() || t > tab.t.back())
    throw std::out_of_range("tabulated profile: t outside sample range");
  auto it = std::upper_bound(tab.t.begin(), tab.t.end(), t);
  std::size_t i = (it == tab.t.begin()) ? 0 : static_cast<std::size_t>(it - tab.t.begin()) - 1;
  if (i + 1 >= tab.t.size()) i = tab.t.size() - 2;
  const double h = tab.t[i + 1] - tab.t[i];
  const double s = (t - tab.t[i]) / h;
  const double y0 = tab.omega2[i], y1 = tab.omega2[i + 1];
  const double d0 = tab.slope[i] * h, d1 = tab.slope[i + 1] * h;
  const double s2 = s * s, s3 = s2 * s;
  return y0 * (2 * s3 - 3 * s2 + 1) + d0 * (s3 - 2 * s2 + s) + y1 * (-2 * s3 + 3 * s2) +
         d1 * (s3 - s2);
}

double FrequencyProfile::omega2_dot(double t) const {
  if (as_constant()) return 0.0;
  if (const auto* m = as_modulated())
    return -m->omega0 * m->omega0 * m->eps * m->gamma * std::sin(m->gamma * t);
  const auto& tab = std::get<Tabulated>(data_);
  if (t < tab.t.front() || t > tab.t.back())
    throw std::out_of_range("tabulated profile: t outside sample range");
  auto it = std::upper_bound(tab.t.begin(), tab.t.end(), t);
  std::size_t i = (it == tab.t.begin()) ? 0 : static_cast<std::size_t>(it - tab.t.begin()) - 1;
  if (i + 1 >= tab.t.size()) i = tab.t.size() - 2;
  const double h = tab.t[i + 1] - tab.t[i];
  const double s = (t - tab.t[i]) / h;
  const double y0 = tab.omega2[i], y1 = tab.omega2[i + 1];
  const double d0 = tab.slope[i] * h, d1 = tab.slope[i + 1] * h;
  const double s2 = s * s;
  return (y0 * (6 * s2 - 6 * s) + d0 * (3 * s2 - 4 * s + 1) + y1 * (6 * s - 6 * s2) +
          d1 * (3 * s2 - 2 * s)) /
         h;
}

double FrequencyProfile::t_min() const {
  if (const auto* tab = as_tabulated()) return tab->t.front();
  return -std::numeric_limits<double>::infinity();
}

double FrequencyProfile::t_max() const {
  if (const auto* tab = as_tabulated()) return tab->t.back();
  return std::numeric_limits<double>::infinity();
}

std::string FrequencyProfile::kind() const {
  if (as_constant()) return "constant";
  if (as_modulated()) return "modulated";
  return "tabulated";
}

}  // namespace hkq
