#pragma once

// Synthetic keypoint imagery: each keypoint is a Gaussian blob with its own
// hue, composited on a textured noise background. Clips move the blob
// cluster along a smooth path for pipeline tests.

#include <cmath>
#include <cstddef>
#include <vector>

#include "ccpose/augment.hpp"
#include "ccpose/tensor.hpp"

namespace ccpose {

struct SynthConfig {
  std::size_t width = 48;
  std::size_t height = 64;
  std::size_t k_pts = 3;
  double blob_sigma = 2.5;
  double blob_amplitude = 0.85;
  double noise_amplitude = 0.15;
  double margin = 7.0;  // keypoints stay this far from the border
};

// Distinct hue per keypoint; cycles for k_pts > 6.
inline std::array<double, 3> keypoint_hue(std::size_t k) {
  static constexpr std::array<std::array<double, 3>, 6> table = {{
      {1.0, 0.15, 0.1},
      {0.1, 1.0, 0.15},
      {0.15, 0.1, 1.0},
      {1.0, 0.9, 0.1},
      {0.9, 0.1, 1.0},
      {0.1, 1.0, 0.9},
  }};
  return table[k % table.size()];
}

inline Tensor textured_background(const SynthConfig& cfg, Rng& rng) {
  const std::size_t H = cfg.height, W = cfg.width;
  Tensor img({3, H, W});
  const double fx = rng.uniform(0.05, 0.25);
  const double fy = rng.uniform(0.05, 0.25);
  const double phase = rng.uniform(0.0, 2.0 * M_PI);
  for (std::size_t c = 0; c < 3; ++c) {
    double* plane = img.data() + c * H * W;
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        const double tex =
            0.5 * (1.0 + std::sin(fx * static_cast<double>(x) +
                                  fy * static_cast<double>(y) + phase));
        plane[y * W + x] = 0.1 + 0.1 * tex + cfg.noise_amplitude * rng.uniform01();
      }
  }
  return img;
}

inline void render_blob(Tensor& img, double cx, double cy, double sigma,
                        double amplitude, const std::array<double, 3>& hue) {
  const std::size_t H = img.dim(1), W = img.dim(2);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  const long r = static_cast<long>(std::ceil(sigma * 4.0));
  const long x0 = std::max(0L, static_cast<long>(cx) - r);
  const long x1 = std::min(static_cast<long>(W) - 1, static_cast<long>(cx) + r);
  const long y0 = std::max(0L, static_cast<long>(cy) - r);
  const long y1 = std::min(static_cast<long>(H) - 1, static_cast<long>(cy) + r);
  for (long y = y0; y <= y1; ++y) {
    for (long x = x0; x <= x1; ++x) {
      const double dx = static_cast<double>(x) - cx;
      const double dy = static_cast<double>(y) - cy;
      const double g = amplitude * std::exp(-(dx * dx + dy * dy) * inv);
      for (std::size_t c = 0; c < 3; ++c) {
        double& px = img[(c * H + static_cast<std::size_t>(y)) * W +
                         static_cast<std::size_t>(x)];
        px = std::min(1.0, px + g * hue[c]);
      }
    }
  }
}

inline SyntheticSample make_sample(const SynthConfig& cfg, Rng& rng) {
  SyntheticSample s;
  s.image = textured_background(cfg, rng);
  s.keypoints.coords.resize(cfg.k_pts);
  s.keypoints.visibility.assign(cfg.k_pts, true);
  for (std::size_t k = 0; k < cfg.k_pts; ++k) {
    const double x = rng.uniform(cfg.margin, static_cast<double>(cfg.width) - cfg.margin);
    const double y = rng.uniform(cfg.margin, static_cast<double>(cfg.height) - cfg.margin);
    s.keypoints.coords[k] = {x, y};
    render_blob(s.image, x, y, cfg.blob_sigma, cfg.blob_amplitude, keypoint_hue(k));
  }
  return s;
}

inline std::vector<SyntheticSample> make_dataset(const SynthConfig& cfg,
                                                 std::size_t count, Rng& rng) {
  std::vector<SyntheticSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(make_sample(cfg, rng));
  return out;
}

// A clip whose blob cluster drifts along a sinusoidal path. Frames are
// full-size images; keypoints stay rigid relative to the cluster center.
struct SynthClip {
  std::vector<Tensor> frames;
  std::vector<KeypointSet> truth;  // source-image coordinates per frame
};

inline SynthClip make_clip(const SynthConfig& cfg, std::size_t frame_count,
                           std::size_t frame_w, std::size_t frame_h, Rng& rng) {
  SynthClip clip;
  std::vector<Keypoint> offsets(cfg.k_pts);
  for (std::size_t k = 0; k < cfg.k_pts; ++k) {
    offsets[k] = {rng.uniform(-10.0, 10.0), rng.uniform(-14.0, 14.0)};
  }
  const double span_x = static_cast<double>(frame_w) * 0.25;
  const double span_y = static_cast<double>(frame_h) * 0.18;
  const double base_x = static_cast<double>(frame_w) / 2.0;
  const double base_y = static_cast<double>(frame_h) / 2.0;
  const double phase = rng.uniform(0.0, 2.0 * M_PI);
  SynthConfig frame_cfg = cfg;
  frame_cfg.width = frame_w;
  frame_cfg.height = frame_h;
  for (std::size_t f = 0; f < frame_count; ++f) {
    const double u = static_cast<double>(f) * 0.12;
    const double cx = base_x + span_x * std::sin(u + phase);
    const double cy = base_y + span_y * std::cos(0.7 * u + phase);
    Tensor img = textured_background(frame_cfg, rng);
    KeypointSet kp;
    kp.coords.resize(cfg.k_pts);
    kp.visibility.assign(cfg.k_pts, true);
    for (std::size_t k = 0; k < cfg.k_pts; ++k) {
      const double x = cx + offsets[k].x;
      const double y = cy + offsets[k].y;
      kp.coords[k] = {x, y};
      render_blob(img, x, y, cfg.blob_sigma, cfg.blob_amplitude, keypoint_hue(k));
    }
    clip.frames.push_back(std::move(img));
    clip.truth.push_back(std::move(kp));
  }
  return clip;
}

}  // namespace ccpose
