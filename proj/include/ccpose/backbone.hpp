#pragma once

// Toy convolutional feature extractor: three stride-2 conv stages with
// smooth (silu) nonlinearities, 3 -> 8 -> 16 -> 32 channels by default.
// Total downsampling is x8, so a 3 x H x W image becomes 32 x H/8 x W/8.

#include <array>
#include <cstddef>

#include "ccpose/conv_grad.hpp"
#include "ccpose/error.hpp"
#include "ccpose/gau.hpp"
#include "ccpose/tensor.hpp"

namespace ccpose {

constexpr std::size_t kBackboneStages = 3;
constexpr std::size_t kBackboneStride = 2;

struct BackboneParams {
  std::array<Tensor, kBackboneStages> w;  // stage kernels, 3x3
  std::array<Tensor, kBackboneStages> b;

  std::size_t out_channels() const { return w[kBackboneStages - 1].dim(0); }

  template <typename Fn>
  void for_each_param(Fn&& fn) {
    fn("backbone.w0", w[0], true);
    fn("backbone.b0", b[0], false);
    fn("backbone.w1", w[1], true);
    fn("backbone.b1", b[1], false);
    fn("backbone.w2", w[2], true);
    fn("backbone.b2", b[2], false);
  }
};

inline BackboneParams init_backbone(Rng& rng, std::size_t in_channels = 3,
                                    std::array<std::size_t, kBackboneStages> channels =
                                        {8, 16, 32}) {
  BackboneParams p;
  std::size_t c = in_channels;
  for (std::size_t i = 0; i < kBackboneStages; ++i) {
    p.w[i] = uniform_init({channels[i], c, 3, 3}, c * 9, rng);
    p.b[i] = Tensor({channels[i]});
    c = channels[i];
  }
  return p;
}

inline BackboneParams zeros_like(const BackboneParams& p) {
  BackboneParams g;
  for (std::size_t i = 0; i < kBackboneStages; ++i) {
    g.w[i] = Tensor(p.w[i].shape());
    g.b[i] = Tensor(p.b[i].shape());
  }
  return g;
}

struct BackboneCache {
  std::array<Tensor, kBackboneStages> inputs;    // stage inputs
  std::array<Tensor, kBackboneStages> pre_act;   // strided conv outputs
};

inline Tensor backbone_forward(const Tensor& img, const BackboneParams& p,
                               BackboneCache& cache) {
  if (img.rank() != 3 || img.dim(0) != p.w[0].dim(1)) {
    throw ShapeError("backbone_forward: image " + img.shape_str() + " wants " +
                     std::to_string(p.w[0].dim(1)) + " channels");
  }
  if (img.dim(1) % 8 != 0 || img.dim(2) % 8 != 0) {
    throw ShapeError("backbone_forward: spatial dims of " + img.shape_str() +
                     " must be divisible by 8");
  }
  Tensor x = img;
  for (std::size_t i = 0; i < kBackboneStages; ++i) {
    cache.inputs[i] = x;
    cache.pre_act[i] = conv2d_strided(x, p.w[i], p.b[i], kBackboneStride);
    x = silu_map(cache.pre_act[i]);
  }
  return x;
}

inline Tensor backbone_backward(const BackboneCache& cache, const Tensor& grad_feature,
                                const BackboneParams& p, BackboneParams& grads) {
  if (cache.pre_act[kBackboneStages - 1].size() == 0) {
    throw ContractError("backbone_backward: cache not produced by backbone_forward");
  }
  if (!grad_feature.same_shape(cache.pre_act[kBackboneStages - 1])) {
    throw ContractError("backbone_backward: upstream grad " +
                        grad_feature.shape_str() + " does not match cached output " +
                        cache.pre_act[kBackboneStages - 1].shape_str());
  }
  Tensor d = grad_feature;
  for (std::size_t i = kBackboneStages; i-- > 0;) {
    Tensor dpre(d.shape());
    for (std::size_t j = 0; j < d.size(); ++j)
      dpre[j] = d[j] * silu_grad(cache.pre_act[i][j]);
    ConvGrads cg = conv2d_strided_backward(cache.inputs[i], p.w[i], dpre,
                                           kBackboneStride);
    add_inplace(grads.w[i], cg.dw);
    add_inplace(grads.b[i], cg.dbias);
    d = std::move(cg.dx);
  }
  return d;  // gradient w.r.t. the input image
}

}  // namespace ccpose
