#pragma once

// SORD training loss: KL divergence between the soft label and the tempered
// softmax of the logits, summed over keypoints and both axes and averaged by
// the number of counted (visible keypoint, axis) pairs. The gradient of each
// counted row is (softmax_t(logits) - label) / (tau * count).

#include <cmath>
#include <cstddef>
#include <vector>

#include "ccpose/error.hpp"
#include "ccpose/simcc.hpp"
#include "ccpose/tensor.hpp"

namespace ccpose {

struct KlLossResult {
  double loss = 0.0;
  Tensor grad_logits_x;
  Tensor grad_logits_y;
};

namespace detail {

inline void check_normalized(const std::vector<double>& label) {
  double sum = 0.0;
  for (double v : label) sum += v;
  if (std::abs(sum - 1.0) > 1e-6) {
    throw ContractError("kl_loss: label sums to " + std::to_string(sum) +
                        ", want 1");
  }
}

// KL(label || softmax(logits / tau)) for one row; adds the per-logit gradient
// scaled by `gscale` into grad.
inline double kl_row(const double* logits, const std::vector<double>& label,
                     double tau, double gscale, double* grad) {
  const std::size_t n = label.size();
  double mx = logits[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += std::exp((logits[i] - mx) / tau);
  const double log_z = std::log(z);
  double kl = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double log_p = (logits[i] - mx) / tau - log_z;
    const double p = std::exp(log_p);
    if (label[i] > 0.0) kl += label[i] * (std::log(label[i]) - log_p);
    grad[i] += gscale * (p - label[i]) / tau;
  }
  return kl;
}

}  // namespace detail

// logits_x: k_pts x bins_x, logits_y: k_pts x bins_y, one SoftLabelPair per
// keypoint. `mask` selects the keypoints that contribute (empty = all).
inline KlLossResult kl_loss(const Tensor& logits_x, const Tensor& logits_y,
                            const std::vector<SoftLabelPair>& labels, double tau,
                            const std::vector<bool>& mask = {}) {
  if (tau <= 0.0) throw ParamError("kl_loss: tau must be positive");
  const std::size_t k_pts = labels.size();
  if (logits_x.rank() != 2 || logits_y.rank() != 2 || logits_x.dim(0) != k_pts ||
      logits_y.dim(0) != k_pts) {
    throw ShapeError("kl_loss: logits " + logits_x.shape_str() + "/" +
                     logits_y.shape_str() + " want " + std::to_string(k_pts) +
                     " rows");
  }
  if (!mask.empty() && mask.size() != k_pts) {
    throw ShapeError("kl_loss: mask size " + std::to_string(mask.size()) +
                     " wants " + std::to_string(k_pts));
  }
  std::size_t counted = 0;
  for (std::size_t k = 0; k < k_pts; ++k) {
    if (mask.empty() || mask[k]) {
      if (labels[k].label_x.size() != logits_x.dim(1) ||
          labels[k].label_y.size() != logits_y.dim(1)) {
        throw ShapeError("kl_loss: label lengths do not match logits at keypoint " +
                         std::to_string(k));
      }
      detail::check_normalized(labels[k].label_x);
      detail::check_normalized(labels[k].label_y);
      ++counted;
    }
  }
  KlLossResult r;
  r.grad_logits_x = Tensor(logits_x.shape());
  r.grad_logits_y = Tensor(logits_y.shape());
  if (counted == 0) return r;

  const double norm = 1.0 / static_cast<double>(counted * 2);
  double total = 0.0;
  for (std::size_t k = 0; k < k_pts; ++k) {
    if (!mask.empty() && !mask[k]) continue;
    total += detail::kl_row(logits_x.row(k), labels[k].label_x, tau, norm,
                            r.grad_logits_x.row(k));
    total += detail::kl_row(logits_y.row(k), labels[k].label_y, tau, norm,
                            r.grad_logits_y.row(k));
  }
  r.loss = total * norm;
  if (!std::isfinite(r.loss)) throw NumericError("kl_loss: non-finite loss");
  return r;
}

}  // namespace ccpose
