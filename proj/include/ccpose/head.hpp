#pragma once

// Prediction head: a 7x7 convolution maps backbone features to one channel
// per keypoint, each channel flattens over space into a keypoint token, a
// shared fully-connected layer expands tokens to the hidden width (256 by
// default), one GAU block refines them, and shared per-axis classifiers emit
// the x/y bin logits.

#include <cstddef>
#include <string>

#include "ccpose/conv_grad.hpp"
#include "ccpose/error.hpp"
#include "ccpose/gau.hpp"
#include "ccpose/simcc.hpp"
#include "ccpose/tensor.hpp"

namespace ccpose {

struct HeadParams {
  Tensor conv_w;   // k_pts x C x 7 x 7
  Tensor conv_b;   // k_pts
  Tensor fc_w;     // (H'*W') x hidden
  Tensor fc_b;     // hidden
  GauParams gau;
  Tensor cls_x_w;  // hidden x bins_x
  Tensor cls_x_b;  // bins_x
  Tensor cls_y_w;  // hidden x bins_y
  Tensor cls_y_b;  // bins_y

  std::size_t k_pts() const { return conv_w.dim(0); }
  std::size_t hidden() const { return fc_w.dim(1); }

  template <typename Fn>
  void for_each_param(Fn&& fn) {
    fn("head.conv_w", conv_w, true);
    fn("head.conv_b", conv_b, false);
    fn("head.fc_w", fc_w, true);
    fn("head.fc_b", fc_b, false);
    gau.for_each_param(fn);
    fn("head.cls_x_w", cls_x_w, true);
    fn("head.cls_x_b", cls_x_b, false);
    fn("head.cls_y_w", cls_y_w, true);
    fn("head.cls_y_b", cls_y_b, false);
  }
};

struct FeatureDims {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
};

struct HeadConfig {
  std::size_t hidden = 256;
  std::size_t expand = 512;   // GAU expansion width e, default 2 * hidden
  std::size_t attn = 128;     // GAU attention width s
  std::size_t conv_kernel = 7;
  bool use_prenorm = true;
  bool use_residual = true;
};

inline HeadParams init_head(const BinSpec& spec, std::size_t k_pts,
                            FeatureDims f, Rng& rng, HeadConfig cfg = {}) {
  if (k_pts == 0 || f.channels == 0 || f.height == 0 || f.width == 0) {
    throw ParamError("init_head: dimensions must be positive");
  }
  HeadParams p;
  const std::size_t kk = cfg.conv_kernel;
  p.conv_w = uniform_init({k_pts, f.channels, kk, kk}, f.channels * kk * kk, rng);
  p.conv_b = Tensor({k_pts});
  const std::size_t flat = f.height * f.width;
  p.fc_w = uniform_init({flat, cfg.hidden}, flat, rng);
  p.fc_b = Tensor({cfg.hidden});
  p.gau = init_gau(cfg.hidden, cfg.expand, cfg.attn, rng);
  p.gau.use_prenorm = cfg.use_prenorm;
  p.gau.use_residual = cfg.use_residual;
  p.cls_x_w = uniform_init({cfg.hidden, spec.bins_x}, cfg.hidden, rng);
  p.cls_x_b = Tensor({spec.bins_x});
  p.cls_y_w = uniform_init({cfg.hidden, spec.bins_y}, cfg.hidden, rng);
  p.cls_y_b = Tensor({spec.bins_y});
  return p;
}

inline HeadParams zeros_like(const HeadParams& p) {
  HeadParams g;
  g.conv_w = Tensor(p.conv_w.shape());
  g.conv_b = Tensor(p.conv_b.shape());
  g.fc_w = Tensor(p.fc_w.shape());
  g.fc_b = Tensor(p.fc_b.shape());
  g.gau = zeros_like(p.gau);
  g.cls_x_w = Tensor(p.cls_x_w.shape());
  g.cls_x_b = Tensor(p.cls_x_b.shape());
  g.cls_y_w = Tensor(p.cls_y_w.shape());
  g.cls_y_b = Tensor(p.cls_y_b.shape());
  return g;
}

struct HeadCache {
  Tensor features;   // conv input
  Tensor conv_out;   // k_pts x H' x W'
  Tensor tokens;     // k_pts x (H'*W')
  Tensor hidden_in;  // k_pts x hidden, fc output
  GauCache gau;
  Tensor hidden_out;  // k_pts x hidden, gau output
};

struct HeadLogits {
  Tensor x;  // k_pts x bins_x
  Tensor y;  // k_pts x bins_y
};

inline HeadLogits head_forward(const Tensor& features, const HeadParams& p,
                               HeadCache& cache) {
  if (features.rank() != 3) {
    throw ShapeError("head_forward/conv: features " + features.shape_str() +
                     " want rank 3 (CxH'xW')");
  }
  if (features.dim(0) != p.conv_w.dim(1)) {
    throw ShapeError("head_forward/conv: features " + features.shape_str() +
                     " want " + std::to_string(p.conv_w.dim(1)) + " channels");
  }
  const std::size_t k_pts = p.k_pts();
  const std::size_t flat = features.dim(1) * features.dim(2);
  if (flat != p.fc_w.dim(0)) {
    throw ShapeError("head_forward/fc_expand: spatial size " +
                     std::to_string(flat) + " wants " +
                     std::to_string(p.fc_w.dim(0)));
  }
  cache.features = features;
  cache.conv_out = conv2d_same(features, p.conv_w, p.conv_b);

  // Channel i, flattened over space, is keypoint i's token.
  cache.tokens = Tensor({k_pts, flat}, std::vector<double>(
                            cache.conv_out.data(),
                            cache.conv_out.data() + cache.conv_out.size()));

  cache.hidden_in = matmul(cache.tokens, p.fc_w);
  for (std::size_t r = 0; r < k_pts; ++r) {
    double* row = cache.hidden_in.row(r);
    for (std::size_t j = 0; j < p.hidden(); ++j) row[j] += p.fc_b[j];
  }

  cache.hidden_out = gau_forward(cache.hidden_in, p.gau, cache.gau);

  HeadLogits logits;
  logits.x = matmul(cache.hidden_out, p.cls_x_w);
  logits.y = matmul(cache.hidden_out, p.cls_y_w);
  for (std::size_t r = 0; r < k_pts; ++r) {
    double* lx = logits.x.row(r);
    for (std::size_t j = 0; j < p.cls_x_b.dim(0); ++j) lx[j] += p.cls_x_b[j];
    double* ly = logits.y.row(r);
    for (std::size_t j = 0; j < p.cls_y_b.dim(0); ++j) ly[j] += p.cls_y_b[j];
  }
  return logits;
}

// Accumulates parameter gradients into `grads` and returns the gradient with
// respect to the input feature map.
inline Tensor head_backward(const HeadCache& cache, const Tensor& grad_logits_x,
                            const Tensor& grad_logits_y, const HeadParams& p,
                            HeadParams& grads) {
  const std::size_t k_pts = p.k_pts();
  if (grad_logits_x.rank() != 2 || grad_logits_x.dim(0) != k_pts ||
      grad_logits_x.dim(1) != p.cls_x_w.dim(1) || grad_logits_y.rank() != 2 ||
      grad_logits_y.dim(0) != k_pts || grad_logits_y.dim(1) != p.cls_y_w.dim(1)) {
    throw ContractError("head_backward: logit grads " + grad_logits_x.shape_str() +
                        "/" + grad_logits_y.shape_str() +
                        " do not match this head");
  }
  if (cache.hidden_out.size() == 0) {
    throw ContractError("head_backward: cache not produced by head_forward");
  }

  add_inplace(grads.cls_x_w, matmul_tn(cache.hidden_out, grad_logits_x));
  add_inplace(grads.cls_y_w, matmul_tn(cache.hidden_out, grad_logits_y));
  for (std::size_t r = 0; r < k_pts; ++r) {
    const double* gx = grad_logits_x.row(r);
    for (std::size_t j = 0; j < grads.cls_x_b.dim(0); ++j) grads.cls_x_b[j] += gx[j];
    const double* gy = grad_logits_y.row(r);
    for (std::size_t j = 0; j < grads.cls_y_b.dim(0); ++j) grads.cls_y_b[j] += gy[j];
  }

  Tensor dhidden_out = matmul_nt(grad_logits_x, p.cls_x_w);
  add_inplace(dhidden_out, matmul_nt(grad_logits_y, p.cls_y_w));

  Tensor dhidden_in = gau_backward(dhidden_out, p.gau, cache.gau, grads.gau);

  add_inplace(grads.fc_w, matmul_tn(cache.tokens, dhidden_in));
  for (std::size_t r = 0; r < k_pts; ++r) {
    const double* dh = dhidden_in.row(r);
    for (std::size_t j = 0; j < grads.fc_b.dim(0); ++j) grads.fc_b[j] += dh[j];
  }
  Tensor dtokens = matmul_nt(dhidden_in, p.fc_w);

  Tensor dconv_out(cache.conv_out.shape(),
                   std::vector<double>(dtokens.data(), dtokens.data() + dtokens.size()));
  ConvGrads cg = conv2d_same_backward(cache.features, p.conv_w, dconv_out);
  add_inplace(grads.conv_w, cg.dw);
  add_inplace(grads.conv_b, cg.dbias);
  return cg.dx;
}

}  // namespace ccpose
