#pragma once

// OneEuro filter: an adaptive first-order low-pass whose cutoff rises with
// the filtered derivative, trading lag for jitter suppression. The first
// sample passes through unchanged.

#include <cmath>

#include "ccpose/error.hpp"

namespace ccpose {

struct OneEuroState {
  double x_prev = 0.0;
  double dx_prev = 0.0;
  bool initialized = false;
  double min_cutoff = 1.0;  // Hz
  double beta = 0.007;
  double d_cutoff = 1.0;  // Hz
  double rate = 30.0;     // nominal Hz, used when the caller has no timestamps
};

namespace detail {
inline double smoothing_alpha(double cutoff, double dt) {
  const double tau = 1.0 / (2.0 * M_PI * cutoff);
  return 1.0 / (1.0 + tau / dt);
}
}  // namespace detail

inline double oneeuro_step(OneEuroState& state, double x, double dt) {
  if (dt <= 0.0) throw ParamError("oneeuro_step: dt must be positive");
  if (!state.initialized) {
    state.x_prev = x;
    state.dx_prev = 0.0;
    state.initialized = true;
    return x;
  }
  const double dx = (x - state.x_prev) / dt;
  const double a_d = detail::smoothing_alpha(state.d_cutoff, dt);
  const double dx_hat = a_d * dx + (1.0 - a_d) * state.dx_prev;
  const double cutoff = state.min_cutoff + state.beta * std::abs(dx_hat);
  const double a = detail::smoothing_alpha(cutoff, dt);
  const double x_hat = a * x + (1.0 - a) * state.x_prev;
  state.x_prev = x_hat;
  state.dx_prev = dx_hat;
  return x_hat;
}

}  // namespace ccpose
