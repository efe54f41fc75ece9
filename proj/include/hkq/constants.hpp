#pragma once

#include <stdexcept>

namespace hkq {

/// Action scale entering the noise correlation <f(t)f(t')> = hbar delta(t-t')
/// and the Schrodinger equations. hbar = 0 is allowed for noise-free runs.
struct PhysicalConstants {
  double hbar = 1.0;

  void validate() const {
    if (!(hbar >= 0.0)) throw std::invalid_argument("hbar must be >= 0");
  }
};

/// Which set of variables a path, trajectory or wave function lives in:
/// physical (x, y, t) or rescaled (X, Y, T) with X = x/rho, T = int dt/rho^2.
enum class Frame { Physical, Rescaled };

inline const char* frame_name(Frame f) {
  return f == Frame::Physical ? "physical" : "rescaled";
}

}  // namespace hkq
