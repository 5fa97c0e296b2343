#pragma once

// SimCC coordinate codec: continuous keypoint coordinates are discretized
// into per-axis bins (bins = round(input_size * split_k), so a 256x192 input
// with split_k=2 uses 512 y-bins and 384 x-bins), encoded as Gaussian soft
// labels sharpened by a softmax temperature, and decoded back by per-axis
// argmax. Bin i sits at the continuous bin coordinate r = i, i.e. at pixel
// i / split_k; the target is kept continuous (r_t = target * split_k) when
// the label is built.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ccpose/error.hpp"
#include "ccpose/tensor.hpp"

namespace ccpose {

struct BinSpec {
  std::size_t input_w = 0;
  std::size_t input_h = 0;
  double split_k = 2.0;
  std::size_t bins_x = 0;
  std::size_t bins_y = 0;
};

enum class Axis { X, Y };

inline BinSpec bin_spec_from_input(std::size_t input_w, std::size_t input_h,
                                   double split_k) {
  if (input_w == 0 || input_h == 0) {
    throw ParamError("bin_spec: input size must be positive");
  }
  if (split_k <= 0.0) {
    throw ParamError("bin_spec: split_k must be positive, got " +
                     std::to_string(split_k));
  }
  BinSpec s;
  s.input_w = input_w;
  s.input_h = input_h;
  s.split_k = split_k;
  s.bins_x = static_cast<std::size_t>(std::llround(static_cast<double>(input_w) * split_k));
  s.bins_y = static_cast<std::size_t>(std::llround(static_cast<double>(input_h) * split_k));
  if (s.bins_x < 2 || s.bins_y < 2) {
    throw ParamError("bin_spec: needs at least 2 bins per axis, got " +
                     std::to_string(s.bins_x) + "x" + std::to_string(s.bins_y));
  }
  return s;
}

inline std::size_t axis_bins(const BinSpec& s, Axis axis) {
  return axis == Axis::X ? s.bins_x : s.bins_y;
}

inline double axis_extent(const BinSpec& s, Axis axis) {
  return static_cast<double>(axis == Axis::X ? s.input_w : s.input_h);
}

// Per-axis label width: sigma = sqrt(bins / 16), in bin units.
inline double sigma_for_bins(std::size_t bins) {
  if (bins < 2) {
    throw ParamError("sigma_for_bins: needs >= 2 bins, got " + std::to_string(bins));
  }
  return std::sqrt(static_cast<double>(bins) / 16.0);
}

// Soft label over `bins` classes for a target at continuous bin coordinate
// r_t: y_i = softmax_i(phi(r_t, i) / tau) with phi the unnormalized Gaussian
// exp(-(r_t - i)^2 / (2 sigma^2)).
inline std::vector<double> encode_soft_label_raw(double r_t, std::size_t bins,
                                                 double sigma, double tau) {
  if (tau <= 0.0) throw ParamError("encode: tau must be positive, got " +
                                   std::to_string(tau));
  if (sigma <= 0.0) throw ParamError("encode: sigma must be positive");
  std::vector<double> phi(bins);
  for (std::size_t i = 0; i < bins; ++i) {
    const double d = r_t - static_cast<double>(i);
    phi[i] = std::exp(-d * d / (2.0 * sigma * sigma));
  }
  double mx = phi[0];
  for (std::size_t i = 1; i < bins; ++i) mx = std::max(mx, phi[i]);
  double sum = 0.0;
  std::vector<double> y(bins);
  for (std::size_t i = 0; i < bins; ++i) {
    y[i] = std::exp((phi[i] - mx) / tau);
    sum += y[i];
  }
  for (std::size_t i = 0; i < bins; ++i) y[i] /= sum;
  return y;
}

inline std::vector<double> encode_soft_label(double target, const BinSpec& spec,
                                             Axis axis, double tau) {
  const double extent = axis_extent(spec, axis);
  if (!(target >= 0.0 && target < extent)) {
    throw EncodeError("encode: target " + std::to_string(target) +
                      " outside [0, " + std::to_string(extent) + ")");
  }
  const std::size_t bins = axis_bins(spec, axis);
  return encode_soft_label_raw(target * spec.split_k, bins, sigma_for_bins(bins), tau);
}

// One-hot variant used by the hard-label ablation: bin round(r_t), clipped.
inline std::vector<double> encode_one_hot(double target, const BinSpec& spec,
                                          Axis axis) {
  const double extent = axis_extent(spec, axis);
  if (!(target >= 0.0 && target < extent)) {
    throw EncodeError("encode: target " + std::to_string(target) +
                      " outside [0, " + std::to_string(extent) + ")");
  }
  const std::size_t bins = axis_bins(spec, axis);
  auto idx = static_cast<long long>(std::llround(target * spec.split_k));
  idx = std::min<long long>(std::max<long long>(idx, 0),
                            static_cast<long long>(bins) - 1);
  std::vector<double> y(bins, 0.0);
  y[static_cast<std::size_t>(idx)] = 1.0;
  return y;
}

struct SoftLabelPair {
  std::vector<double> label_x;
  std::vector<double> label_y;
};

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
};

struct KeypointSet {
  std::vector<Keypoint> coords;
  std::vector<bool> visibility;
};

struct DecodedKeypoint {
  double x = 0.0;
  double y = 0.0;
  double score = 0.0;
};

// Lowest index wins ties, so uniform vectors decode to bin 0.
inline std::size_t argmax_lowest(const double* v, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

// Argmax per axis; coordinate = index / split_k, score = mean of the two
// axis peak probabilities.
inline DecodedKeypoint decode_coordinates(const std::vector<double>& label_x,
                                          const std::vector<double>& label_y,
                                          const BinSpec& spec) {
  if (label_x.size() != spec.bins_x || label_y.size() != spec.bins_y) {
    throw ShapeError("decode: label lengths [" + std::to_string(label_x.size()) +
                     "," + std::to_string(label_y.size()) + "] want [" +
                     std::to_string(spec.bins_x) + "," + std::to_string(spec.bins_y) + "]");
  }
  const std::size_t ix = argmax_lowest(label_x.data(), label_x.size());
  const std::size_t iy = argmax_lowest(label_y.data(), label_y.size());
  DecodedKeypoint k;
  k.x = static_cast<double>(ix) / spec.split_k;
  k.y = static_cast<double>(iy) / spec.split_k;
  k.score = 0.5 * (label_x[ix] + label_y[iy]);
  return k;
}

}  // namespace ccpose
