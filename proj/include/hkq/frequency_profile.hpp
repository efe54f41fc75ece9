#pragma once

#include <limits>
#include <string>
#include <variant>
#include <vector>

namespace hkq {

/// Time-dependent squared frequency omega^2(t) of the oscillator
/// x'' + omega^2(t) x = 0. Everything downstream consumes omega^2, never
/// omega itself, so the tabulated variant stores and interpolates omega^2.
class FrequencyProfile {
 public:
  struct Constant {
    double omega0;
  };
  struct Modulated {  // omega^2(t) = omega0^2 (1 + eps cos(gamma t))
    double omega0;
    double eps;
    double gamma;
  };
  struct Tabulated {  // monotone cubic interpolation of omega^2 samples
    std::vector<double> t;
    std::vector<double> omega2;
    std::vector<double> slope;  // PCHIP derivatives, filled on construction
  };

  static FrequencyProfile constant(double omega0);
  static FrequencyProfile modulated(double omega0, double eps, double gamma);
  static FrequencyProfile tabulated(std::vector<double> t, std::vector<double> omega2);

  double omega2(double t) const;
  double omega2_dot(double t) const;  // d(omega^2)/dt
  double t_min() const;
  double t_max() const;
  std::string kind() const;

  const Constant* as_constant() const { return std::get_if<Constant>(&data_); }
  const Modulated* as_modulated() const { return std::get_if<Modulated>(&data_); }
  const Tabulated* as_tabulated() const { return std::get_if<Tabulated>(&data_); }

 private:
  explicit FrequencyProfile(std::variant<Constant, Modulated, Tabulated> d)
      : data_(std::move(d)) {}

  std::variant<Constant, Modulated, Tabulated> data_;
};

}  // namespace hkq
