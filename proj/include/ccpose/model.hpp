#pragma once

// Full pose model: toy backbone + prediction head + bin geometry, with
// seeded construction and single-crop prediction.

#include <cstddef>
#include <vector>

#include "ccpose/backbone.hpp"
#include "ccpose/head.hpp"
#include "ccpose/simcc.hpp"
#include "ccpose/tensor.hpp"

namespace ccpose {

struct ModelConfig {
  std::size_t input_w = 48;
  std::size_t input_h = 64;
  double split_k = 2.0;
  std::size_t k_pts = 3;
  HeadConfig head;
};

struct PoseModel {
  ModelConfig cfg;
  BinSpec spec;
  BackboneParams backbone;
  HeadParams head;

  FeatureDims feature_dims() const {
    return {backbone.out_channels(), cfg.input_h / 8, cfg.input_w / 8};
  }
};

inline PoseModel init_model(const ModelConfig& cfg, RngSeed seed) {
  PoseModel m;
  m.cfg = cfg;
  m.spec = bin_spec_from_input(cfg.input_w, cfg.input_h, cfg.split_k);
  Rng rng(seed);
  m.backbone = init_backbone(rng);
  m.head = init_head(m.spec, cfg.k_pts, m.feature_dims(), rng, cfg.head);
  return m;
}

// Forward through backbone and head; crop must be 3 x input_h x input_w.
inline HeadLogits model_forward(const PoseModel& m, const Tensor& crop,
                                BackboneCache& bcache, HeadCache& hcache) {
  Tensor features = backbone_forward(crop, m.backbone, bcache);
  return head_forward(features, m.head, hcache);
}

// Decoded keypoints in model-input pixel space. Distributions are the same
// tempered softmax the loss calibrates, so peak probabilities are comparable
// to label peaks.
inline std::vector<DecodedKeypoint> model_predict(const PoseModel& m,
                                                  const Tensor& crop,
                                                  double tau = 0.1) {
  BackboneCache bc;
  HeadCache hc;
  HeadLogits logits = model_forward(m, crop, bc, hc);
  Tensor px = softmax_t(logits.x, tau);
  Tensor py = softmax_t(logits.y, tau);
  std::vector<DecodedKeypoint> out(m.cfg.k_pts);
  for (std::size_t k = 0; k < m.cfg.k_pts; ++k) {
    out[k] = decode_coordinates(
        std::vector<double>(px.row(k), px.row(k) + m.spec.bins_x),
        std::vector<double>(py.row(k), py.row(k) + m.spec.bins_y), m.spec);
  }
  return out;
}

}  // namespace ccpose
