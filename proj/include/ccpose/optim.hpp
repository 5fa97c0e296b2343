#pragma once

// AdamW with decoupled weight decay, EMA weight averaging, and the
// flat-cosine learning-rate schedule (linear warmup, flat at the base rate
// until half of training, cosine decay to 5% of the base rate).

#include <cmath>
#include <cstddef>
#include <vector>

#include "ccpose/error.hpp"
#include "ccpose/tensor.hpp"

namespace ccpose {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  Tensor m;
  Tensor v;
};

// One decoupled-weight-decay update for a single tensor. `t` is the 1-based
// step count used for bias correction.
inline void adamw_step(Tensor& param, const Tensor& grad, AdamMoments& state,
                       double lr, double weight_decay, long t,
                       const AdamHyper& hp = {}) {
  if (!param.same_shape(grad)) {
    throw ShapeError("adamw_step: grad " + grad.shape_str() +
                     " does not match param " + param.shape_str());
  }
  if (state.m.size() == 0) {
    state.m = Tensor(param.shape());
    state.v = Tensor(param.shape());
  }
  if (!state.m.same_shape(param)) {
    throw ShapeError("adamw_step: state " + state.m.shape_str() +
                     " does not match param " + param.shape_str());
  }
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
    state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    param[i] -= lr * (m_hat / (std::sqrt(v_hat) + hp.eps) + weight_decay * param[i]);
  }
}

// ema <- decay * ema + (1 - decay) * params.
inline void ema_update(Tensor& ema, const Tensor& params, double decay) {
  if (!ema.same_shape(params)) {
    throw ShapeError("ema_update: shapes " + ema.shape_str() + " vs " +
                     params.shape_str());
  }
  for (std::size_t i = 0; i < ema.size(); ++i)
    ema[i] = decay * ema[i] + (1.0 - decay) * params[i];
}

// Warmed-up EMA decay. The raw asymptotic decay (0.9998) averages over ~5000
// steps, far longer than a desk-scale run, so the effective decay ramps up
// with step count: decay_t = asymptotic * (1 - exp(-(t+1)/gamma)). Early
// steps track the raw weights closely; late steps smooth over ~1/(1-decay_t)
// steps.
inline double warmed_ema_decay(long step, double asymptotic_decay, double gamma) {
  if (gamma <= 0.0) return asymptotic_decay;
  return asymptotic_decay *
         (1.0 - std::exp(-static_cast<double>(step + 1) / gamma));
}

// lr(step): linear warmup to base_lr over warmup_iters, flat until 50% of
// total_steps, then cosine decay to base_lr * 0.05 at step == total_steps.
inline double flat_cosine_lr(long step, long total_steps, double base_lr,
                             long warmup_iters) {
  if (step < 0 || step > total_steps) {
    throw ParamError("flat_cosine_lr: step " + std::to_string(step) +
                     " outside [0, " + std::to_string(total_steps) + "]");
  }
  if (warmup_iters > 0 && step < warmup_iters) {
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_iters);
  }
  const long flat_end = total_steps / 2;
  if (step <= flat_end) return base_lr;
  const double end_lr = base_lr * 0.05;
  const double span = static_cast<double>(total_steps - flat_end);
  const double u = static_cast<double>(step - flat_end) / span;
  return end_lr + (base_lr - end_lr) * 0.5 * (1.0 + std::cos(M_PI * u));
}

}  // namespace ccpose
