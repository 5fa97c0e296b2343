#pragma once

// Top-down inference pipeline: affine crop per box, skip-frame detection
// (the detector runs on frames where frame_index % K == 0, plus one forced
// run after a track loss), pose decoding mapped back to source coordinates,
// OKS pose NMS, and per-keypoint OneEuro smoothing.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "ccpose/affine.hpp"
#include "ccpose/error.hpp"
#include "ccpose/filter.hpp"
#include "ccpose/simcc.hpp"
#include "ccpose/tensor.hpp"

namespace ccpose {

struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
  double score = 1.0;

  double cx() const { return x + w / 2.0; }
  double cy() const { return y + h / 2.0; }
  double area() const { return w * h; }
};

struct PoseKeypoint {
  double x = 0.0;
  double y = 0.0;
  double score = 0.0;
};

struct PoseResult {
  std::vector<PoseKeypoint> keypoints;
  double instance_score = 0.0;
};

// Crop the padded box to out_w x out_h, preserving the box center and
// expanding the region to the output aspect ratio. Returns the crop and the
// source->model transform.
inline std::pair<Tensor, AffineTransform> crop_affine(const Tensor& image,
                                                      const BBox& box,
                                                      std::size_t out_w,
                                                      std::size_t out_h,
                                                      double padding = 1.25) {
  if (box.w <= 0.0 || box.h <= 0.0) {
    throw ParamError("crop_affine: degenerate box " + std::to_string(box.w) + "x" +
                     std::to_string(box.h));
  }
  if (padding < 1.0) throw ParamError("crop_affine: padding must be >= 1");
  double region_w = box.w * padding;
  double region_h = box.h * padding;
  const double out_aspect = static_cast<double>(out_w) / static_cast<double>(out_h);
  if (region_w / region_h < out_aspect) {
    region_w = region_h * out_aspect;
  } else {
    region_h = region_w / out_aspect;
  }
  const double s = static_cast<double>(out_w) / region_w;
  AffineTransform t;
  t.a = s;
  t.d = s;
  t.tx = static_cast<double>(out_w) / 2.0 - s * box.cx();
  t.ty = static_cast<double>(out_h) / 2.0 - s * box.cy();
  return {warp_affine(image, t, out_h, out_w), t};
}

// Tight box around the confident keypoints of a pose, expanded by `margin`
// about its center. Returns nothing when the track is lost (no keypoint
// above the score threshold). Degenerate extents are inflated to
// `min_side`.
inline std::optional<BBox> bbox_from_pose(const PoseResult& pose, double margin,
                                          double score_threshold = 0.2,
                                          double min_side = 32.0) {
  double x0 = std::numeric_limits<double>::infinity(), y0 = x0;
  double x1 = -x0, y1 = -x0;
  bool any = false;
  for (const auto& kp : pose.keypoints) {
    if (kp.score <= score_threshold) continue;
    any = true;
    x0 = std::min(x0, kp.x);
    x1 = std::max(x1, kp.x);
    y0 = std::min(y0, kp.y);
    y1 = std::max(y1, kp.y);
  }
  if (!any) return std::nullopt;
  double w = (x1 - x0) * margin;
  double h = (y1 - y0) * margin;
  const double cx = (x0 + x1) / 2.0, cy = (y0 + y1) / 2.0;
  w = std::max(w, min_side);
  h = std::max(h, min_side);
  return BBox{cx - w / 2.0, cy - h / 2.0, w, h, pose.instance_score};
}

// COCO object keypoint similarity: mean over the keypoints visible in `a`
// of exp(-d_i^2 / (2 * area * k_i^2)). A keypoint counts as visible when its
// score in `a` is positive.
inline double oks(const PoseResult& a, const PoseResult& b, double area,
                  const std::vector<double>& per_kpt_k) {
  if (area <= 0.0) throw ParamError("oks: area must be positive");
  if (a.keypoints.size() != b.keypoints.size() ||
      per_kpt_k.size() != a.keypoints.size()) {
    throw ShapeError("oks: keypoint counts differ (" +
                     std::to_string(a.keypoints.size()) + ", " +
                     std::to_string(b.keypoints.size()) + ", k=" +
                     std::to_string(per_kpt_k.size()) + ")");
  }
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < a.keypoints.size(); ++i) {
    if (a.keypoints[i].score <= 0.0) continue;
    const double dx = a.keypoints[i].x - b.keypoints[i].x;
    const double dy = a.keypoints[i].y - b.keypoints[i].y;
    const double k = per_kpt_k[i];
    sum += std::exp(-(dx * dx + dy * dy) / (2.0 * area * k * k));
    ++counted;
  }
  if (counted == 0) {
    throw ParamError("oks: no visible keypoints in the reference pose");
  }
  return sum / static_cast<double>(counted);
}

// Extent area of the confident keypoints, for NMS similarity.
inline double pose_extent_area(const PoseResult& pose) {
  double x0 = std::numeric_limits<double>::infinity(), y0 = x0;
  double x1 = -x0, y1 = -x0;
  for (const auto& kp : pose.keypoints) {
    if (kp.score <= 0.0) continue;
    x0 = std::min(x0, kp.x);
    x1 = std::max(x1, kp.x);
    y0 = std::min(y0, kp.y);
    y1 = std::max(y1, kp.y);
  }
  if (!(x1 >= x0)) return 1.0;
  return std::max(1.0, (x1 - x0) * (y1 - y0));
}

// Greedy OKS suppression: sort by instance score (ties keep input order),
// keep a pose iff its OKS against every kept pose stays below the threshold.
// Returns indices into `poses`, in kept order.
inline std::vector<std::size_t> pose_nms_indices(const std::vector<PoseResult>& poses,
                                                 double threshold,
                                                 const std::vector<double>& per_kpt_k) {
  if (threshold <= 0.0 || threshold >= 1.0) {
    throw ParamError("pose_nms: threshold must be in (0, 1)");
  }
  std::vector<std::size_t> order(poses.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
    return poses[l].instance_score > poses[r].instance_score;
  });
  std::vector<std::size_t> kept;
  for (std::size_t idx : order) {
    bool suppressed = false;
    for (std::size_t kidx : kept) {
      const double area = pose_extent_area(poses[kidx]);
      if (oks(poses[kidx], poses[idx], area, per_kpt_k) >= threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

inline std::vector<PoseResult> pose_nms(const std::vector<PoseResult>& poses,
                                        double threshold,
                                        const std::vector<double>& per_kpt_k) {
  std::vector<PoseResult> out;
  for (std::size_t idx : pose_nms_indices(poses, threshold, per_kpt_k)) {
    out.push_back(poses[idx]);
  }
  return out;
}

// Pluggable person source and pose estimator. The estimator sees the crop
// and returns keypoints in model-input space.
using Detector = std::function<std::vector<BBox>(const Tensor& image)>;
using PoseEstimator = std::function<std::vector<DecodedKeypoint>(const Tensor& crop)>;

struct PipelineConfig {
  std::size_t input_w = 48;
  std::size_t input_h = 64;
  double crop_padding = 1.25;
  double nms_threshold = 0.7;
  double oks_k = 0.05;          // per-keypoint constant for synthetic data
  double bbox_margin = 1.25;
  double kpt_score_threshold = 0.2;
  double min_box_side = 32.0;
  double frame_dt = 1.0 / 30.0;
  OneEuroState filter_defaults;  // cutoff/beta template for new tracks
  double track_match_dist = 96.0;  // max center distance when re-matching
};

struct Track {
  PoseResult pose;                 // last smoothed pose, source space
  std::vector<OneEuroState> fx;    // per keypoint
  std::vector<OneEuroState> fy;
};

struct PipelineState {
  long frame_index = 0;
  std::size_t detect_interval = 5;  // K
  bool force_detect = false;
  std::vector<Track> tracks;
  long detector_invocations = 0;
};

namespace detail {

inline Track make_track(const PoseResult& pose, const PipelineConfig& cfg) {
  Track t;
  t.pose = pose;
  t.fx.assign(pose.keypoints.size(), cfg.filter_defaults);
  t.fy.assign(pose.keypoints.size(), cfg.filter_defaults);
  return t;
}

inline std::pair<double, double> pose_center(const PoseResult& pose) {
  double sx = 0.0, sy = 0.0;
  std::size_t n = 0;
  for (const auto& kp : pose.keypoints) {
    if (kp.score <= 0.0) continue;
    sx += kp.x;
    sy += kp.y;
    ++n;
  }
  if (n == 0) return {0.0, 0.0};
  return {sx / static_cast<double>(n), sy / static_cast<double>(n)};
}

}  // namespace detail

// Run one frame. On detection frames the detector provides boxes and tracks
// are rebuilt (existing filter state is carried over by nearest-center
// matching); on interval frames boxes derive from the previous poses. A lost
// track forces a detection on the next frame.
inline std::vector<PoseResult> process_frame(PipelineState& state, const Tensor& image,
                                             const Detector& detector,
                                             const PoseEstimator& estimator,
                                             const PipelineConfig& cfg) {
  if (state.detect_interval == 0) throw ParamError("process_frame: K must be >= 1");
  const bool detection_frame =
      (state.frame_index % static_cast<long>(state.detect_interval) == 0) ||
      state.force_detect;
  state.force_detect = false;

  struct Candidate {
    BBox box;
    long track = -1;  // index into state.tracks, -1 for a fresh detection
  };
  std::vector<Candidate> candidates;

  if (detection_frame) {
    ++state.detector_invocations;
    for (const BBox& b : detector(image)) candidates.push_back({b, -1});
    // Carry filter state across the detection by nearest center.
    std::vector<bool> used(state.tracks.size(), false);
    for (auto& cand : candidates) {
      double best = cfg.track_match_dist;
      long best_idx = -1;
      for (std::size_t t = 0; t < state.tracks.size(); ++t) {
        if (used[t]) continue;
        auto [cx, cy] = detail::pose_center(state.tracks[t].pose);
        const double d = std::hypot(cand.box.cx() - cx, cand.box.cy() - cy);
        if (d < best) {
          best = d;
          best_idx = static_cast<long>(t);
        }
      }
      if (best_idx >= 0) {
        used[static_cast<std::size_t>(best_idx)] = true;
        cand.track = best_idx;
      }
    }
  } else {
    for (std::size_t t = 0; t < state.tracks.size(); ++t) {
      auto box = bbox_from_pose(state.tracks[t].pose, cfg.bbox_margin,
                                cfg.kpt_score_threshold, cfg.min_box_side);
      if (!box) {
        state.force_detect = true;  // lost; re-detect next frame
        continue;
      }
      candidates.push_back({*box, static_cast<long>(t)});
    }
  }

  std::vector<PoseResult> poses;
  std::vector<long> pose_track;
  for (const auto& cand : candidates) {
    auto [crop, t] = crop_affine(image, cand.box, cfg.input_w, cfg.input_h,
                                 cfg.crop_padding);
    const AffineTransform inv = t.inverse();
    PoseResult pose;
    double score_sum = 0.0;
    for (const DecodedKeypoint& dk : estimator(crop)) {
      auto [sx, sy] = inv.apply(dk.x, dk.y);
      pose.keypoints.push_back({sx, sy, dk.score});
      score_sum += dk.score;
    }
    pose.instance_score = pose.keypoints.empty()
                              ? 0.0
                              : score_sum / static_cast<double>(pose.keypoints.size());
    poses.push_back(std::move(pose));
    pose_track.push_back(cand.track);
  }

  std::vector<double> per_kpt_k;
  if (!poses.empty()) per_kpt_k.assign(poses[0].keypoints.size(), cfg.oks_k);
  std::vector<std::size_t> kept = poses.empty()
                                      ? std::vector<std::size_t>{}
                                      : pose_nms_indices(poses, cfg.nms_threshold,
                                                         per_kpt_k);

  std::vector<Track> new_tracks;
  std::vector<PoseResult> output;
  for (std::size_t idx : kept) {
    const long t = pose_track[idx];
    Track track = (t >= 0 && static_cast<std::size_t>(t) < state.tracks.size() &&
                   state.tracks[static_cast<std::size_t>(t)].fx.size() ==
                       poses[idx].keypoints.size())
                      ? state.tracks[static_cast<std::size_t>(t)]
                      : detail::make_track(poses[idx], cfg);
    PoseResult smoothed = poses[idx];
    for (std::size_t k = 0; k < smoothed.keypoints.size(); ++k) {
      smoothed.keypoints[k].x =
          oneeuro_step(track.fx[k], smoothed.keypoints[k].x, cfg.frame_dt);
      smoothed.keypoints[k].y =
          oneeuro_step(track.fy[k], smoothed.keypoints[k].y, cfg.frame_dt);
    }
    track.pose = smoothed;
    new_tracks.push_back(std::move(track));
    output.push_back(std::move(smoothed));
  }
  state.tracks = std::move(new_tracks);
  ++state.frame_index;
  return output;
}

}  // namespace ccpose
