#pragma once

// End-to-end training on synthetic keypoint imagery: SORD-KL loss with
// temperature, AdamW with a decay mask over norm gains and biases, warmed-up
// EMA weights, flat-cosine schedule, and the strong-then-weak two-stage
// augmentation split.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "ccpose/augment.hpp"
#include "ccpose/loss.hpp"
#include "ccpose/model.hpp"
#include "ccpose/optim.hpp"
#include "ccpose/simcc.hpp"
#include "ccpose/synth.hpp"
#include "ccpose/tensor.hpp"

namespace ccpose {

enum class LabelMode { Sord, OneHot };

struct TrainConfig {
  double base_lr = 0.004;
  AdamHyper adam;
  double weight_decay = 0.05;
  double ema_decay = 0.9998;
  double ema_warmup_gamma = 200.0;  // steps; see warmed_ema_decay
  std::size_t epochs_strong = 60;
  std::size_t epochs_weak = 10;
  std::size_t batch_size = 32;
  double tau = 0.1;
  long warmup_iters = 50;
  RngSeed seed{7};
  LabelMode label_mode = LabelMode::Sord;

  void validate() const {
    if (base_lr <= 0.0 || ema_decay < 0.0 || ema_decay > 1.0 || batch_size == 0 ||
        tau <= 0.0) {
      throw ParamError("train config: rates must be positive, batch nonzero");
    }
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::string stage;
  double loss = 0.0;
  double pck = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  PoseModel model;       // raw weights
  PoseModel ema_model;   // EMA weights
  std::vector<EpochRecord> log;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

namespace detail {

struct ParamSet {
  std::vector<Tensor*> params;
  std::vector<bool> decay_ok;
};

inline ParamSet collect_params(PoseModel& m) {
  ParamSet set;
  auto add = [&](const char*, Tensor& t, bool decay) {
    set.params.push_back(&t);
    set.decay_ok.push_back(decay);
  };
  m.backbone.for_each_param(add);
  m.head.for_each_param(add);
  return set;
}

inline SoftLabelPair make_label(const Keypoint& kp, const BinSpec& spec, double tau,
                                LabelMode mode) {
  SoftLabelPair lb;
  if (mode == LabelMode::Sord) {
    lb.label_x = encode_soft_label(kp.x, spec, Axis::X, tau);
    lb.label_y = encode_soft_label(kp.y, spec, Axis::Y, tau);
  } else {
    lb.label_x = encode_one_hot(kp.x, spec, Axis::X);
    lb.label_y = encode_one_hot(kp.y, spec, Axis::Y);
  }
  return lb;
}

}  // namespace detail

// Fraction of visible keypoints whose prediction lands within
// threshold_frac * max(input_w, input_h) of the truth, on clean samples.
inline double evaluate_pck(const PoseModel& m,
                           const std::vector<SyntheticSample>& samples,
                           double threshold_frac = 0.1) {
  const double norm = static_cast<double>(std::max(m.cfg.input_w, m.cfg.input_h));
  const double limit = threshold_frac * norm;
  std::size_t hit = 0, total = 0;
  for (const auto& s : samples) {
    auto pred = model_predict(m, s.image);
    for (std::size_t k = 0; k < pred.size() && k < s.keypoints.coords.size(); ++k) {
      if (!s.keypoints.visibility[k]) continue;
      ++total;
      const double dx = pred[k].x - s.keypoints.coords[k].x;
      const double dy = pred[k].y - s.keypoints.coords[k].y;
      if (std::sqrt(dx * dx + dy * dy) <= limit) ++hit;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

// Mean loss over one batch; accumulates parameter gradients into the grad
// containers (already zeroed by the caller).
inline double train_batch(PoseModel& m, const std::vector<const SyntheticSample*>& batch,
                          double tau, LabelMode mode, BackboneParams& bgrads,
                          HeadParams& hgrads) {
  double loss_sum = 0.0;
  std::size_t counted = 0;
  for (const SyntheticSample* s : batch) {
    std::vector<SoftLabelPair> labels(m.cfg.k_pts);
    std::vector<bool> mask(m.cfg.k_pts, false);
    bool any = false;
    for (std::size_t k = 0; k < m.cfg.k_pts; ++k) {
      if (!s->keypoints.visibility[k]) continue;
      labels[k] = detail::make_label(s->keypoints.coords[k], m.spec, tau, mode);
      mask[k] = true;
      any = true;
    }
    if (!any) continue;

    BackboneCache bc;
    HeadCache hc;
    HeadLogits logits = model_forward(m, s->image, bc, hc);
    KlLossResult kr = kl_loss(logits.x, logits.y, labels, tau, mask);
    loss_sum += kr.loss;
    ++counted;
    Tensor dfeat = head_backward(hc, kr.grad_logits_x, kr.grad_logits_y, m.head, hgrads);
    backbone_backward(bc, dfeat, m.backbone, bgrads);
  }
  if (counted > 1) {
    const double inv = 1.0 / static_cast<double>(counted);
    auto scale = [&](const char*, Tensor& t, bool) { scale_inplace(t, inv); };
    bgrads.for_each_param(scale);
    hgrads.for_each_param(scale);
    loss_sum *= inv;
  }
  return loss_sum;
}

inline TrainResult train(const TrainConfig& cfg, const AugmentationConfig& aug_strong,
                         const AugmentationConfig& aug_weak,
                         const std::vector<SyntheticSample>& dataset,
                         const std::vector<SyntheticSample>& val_set,
                         PoseModel model, EpochCallback on_epoch = {}) {
  cfg.validate();
  if (dataset.empty()) throw ParamError("train: dataset is empty");

  TrainResult result;
  result.model = std::move(model);
  result.ema_model = result.model;

  detail::ParamSet params = detail::collect_params(result.model);
  detail::ParamSet ema_params = detail::collect_params(result.ema_model);
  std::vector<AdamMoments> moments(params.params.size());

  const std::size_t total_epochs = cfg.epochs_strong + cfg.epochs_weak;
  const std::size_t steps_per_epoch =
      (dataset.size() + cfg.batch_size - 1) / cfg.batch_size;
  const long total_steps = static_cast<long>(total_epochs * steps_per_epoch);

  Rng rng(cfg.seed.value ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  long step = 0;
  double lr = 0.0;
  for (std::size_t epoch = 0; epoch < total_epochs; ++epoch) {
    const bool strong = epoch < cfg.epochs_strong;
    const AugmentationConfig& aug = strong ? aug_strong : aug_weak;

    // Fisher-Yates with the run rng; deterministic per seed.
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.index(i)]);
    }

    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<SyntheticSample> augmented;
      augmented.reserve(stop - start);
      std::vector<const SyntheticSample*> batch;
      for (std::size_t i = start; i < stop; ++i) {
        augmented.push_back(augment(dataset[order[i]], aug, rng));
        batch.push_back(&augmented.back());
      }

      BackboneParams bgrads = zeros_like(result.model.backbone);
      HeadParams hgrads = zeros_like(result.model.head);
      const double loss = train_batch(result.model, batch, cfg.tau, cfg.label_mode,
                                      bgrads, hgrads);
      if (!std::isfinite(loss)) {
        throw NumericError("train: loss diverged (NaN/Inf) at epoch " +
                           std::to_string(epoch) + ", step " + std::to_string(step));
      }
      epoch_loss += loss;
      ++batches;

      lr = flat_cosine_lr(std::min(step + 1, total_steps), total_steps, cfg.base_lr,
                          cfg.warmup_iters);
      detail::ParamSet gset;
      auto collect = [&](const char*, Tensor& t, bool decay) {
        gset.params.push_back(&t);
        gset.decay_ok.push_back(decay);
      };
      bgrads.for_each_param(collect);
      hgrads.for_each_param(collect);

      ++step;
      for (std::size_t i = 0; i < params.params.size(); ++i) {
        const double wd = params.decay_ok[i] ? cfg.weight_decay : 0.0;
        adamw_step(*params.params[i], *gset.params[i], moments[i], lr, wd, step,
                   cfg.adam);
      }
      const double decay = warmed_ema_decay(step, cfg.ema_decay, cfg.ema_warmup_gamma);
      for (std::size_t i = 0; i < params.params.size(); ++i) {
        ema_update(*ema_params.params[i], *params.params[i], decay);
      }
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.stage = strong ? "strong" : "weak";
    rec.loss = batches ? epoch_loss / static_cast<double>(batches) : 0.0;
    rec.pck = val_set.empty() ? 0.0 : evaluate_pck(result.model, val_set);
    rec.lr = lr;
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

}  // namespace ccpose
