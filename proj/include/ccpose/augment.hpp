#pragma once

// Training-time augmentation: random scale / rotation / shift about the
// image center plus Cutout. Keypoints follow the same transform; any that
// leave the frame are marked invisible. The strong and weak stages differ
// only in their config.

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "ccpose/affine.hpp"
#include "ccpose/simcc.hpp"
#include "ccpose/tensor.hpp"

namespace ccpose {

struct AugmentationConfig {
  double scale_min = 0.6;
  double scale_max = 1.4;
  double rotation_deg = 80.0;
  double cutout_prob = 1.0;
  bool shift_enabled = true;
  double shift_frac = 0.1;         // of each image side
  double cutout_side_min = 0.10;   // of each image side
  double cutout_side_max = 0.30;

  static AugmentationConfig strong() { return {}; }

  static AugmentationConfig weak() {
    AugmentationConfig c;
    c.rotation_deg = 20.0;
    c.cutout_prob = 0.5;
    c.shift_enabled = false;
    return c;
  }
};

struct SyntheticSample {
  Tensor image;  // 3 x H x W
  KeypointSet keypoints;
};

// Draws are consumed in a fixed order (scale, rotation, shift x/y, cutout
// gate, cutout geometry) so a replayed rng reproduces the exact output.
inline SyntheticSample augment(const SyntheticSample& sample,
                               const AugmentationConfig& cfg, Rng& rng) {
  const std::size_t H = sample.image.dim(1), W = sample.image.dim(2);
  const double scale = rng.uniform(cfg.scale_min, cfg.scale_max);
  const double rot = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg) * M_PI / 180.0;
  double shift_x = 0.0, shift_y = 0.0;
  if (cfg.shift_enabled) {
    shift_x = rng.uniform(-cfg.shift_frac, cfg.shift_frac) * static_cast<double>(W);
    shift_y = rng.uniform(-cfg.shift_frac, cfg.shift_frac) * static_cast<double>(H);
  }
  const double cx = (static_cast<double>(W) - 1.0) / 2.0;
  const double cy = (static_cast<double>(H) - 1.0) / 2.0;
  const AffineTransform t =
      make_center_transform(cx, cy, scale, rot, shift_x, shift_y);

  SyntheticSample out;
  const bool is_identity = scale == 1.0 && rot == 0.0 && shift_x == 0.0 &&
                           shift_y == 0.0;
  out.image = is_identity ? sample.image : warp_affine(sample.image, t, H, W);
  out.keypoints.coords.resize(sample.keypoints.coords.size());
  out.keypoints.visibility.resize(sample.keypoints.visibility.size());
  for (std::size_t k = 0; k < sample.keypoints.coords.size(); ++k) {
    auto [x, y] = t.apply(sample.keypoints.coords[k].x, sample.keypoints.coords[k].y);
    out.keypoints.coords[k] = {x, y};
    const bool inside = x >= 0.0 && x < static_cast<double>(W) && y >= 0.0 &&
                        y < static_cast<double>(H);
    out.keypoints.visibility[k] = sample.keypoints.visibility[k] && inside;
  }

  if (rng.uniform01() < cfg.cutout_prob) {
    const double side_w =
        rng.uniform(cfg.cutout_side_min, cfg.cutout_side_max) * static_cast<double>(W);
    const double side_h =
        rng.uniform(cfg.cutout_side_min, cfg.cutout_side_max) * static_cast<double>(H);
    const double ccx = rng.uniform(0.0, static_cast<double>(W));
    const double ccy = rng.uniform(0.0, static_cast<double>(H));
    const long x0 = std::max(0L, static_cast<long>(std::floor(ccx - side_w / 2.0)));
    const long x1 = std::min(static_cast<long>(W), static_cast<long>(std::ceil(ccx + side_w / 2.0)));
    const long y0 = std::max(0L, static_cast<long>(std::floor(ccy - side_h / 2.0)));
    const long y1 = std::min(static_cast<long>(H), static_cast<long>(std::ceil(ccy + side_h / 2.0)));
    for (std::size_t c = 0; c < 3; ++c) {
      double* plane = out.image.data() + c * H * W;
      for (long y = y0; y < y1; ++y)
        for (long x = x0; x < x1; ++x)
          plane[static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x)] = 0.0;
    }
  }
  return out;
}

}  // namespace ccpose
