#pragma once

// Gated attention unit over n keypoint tokens of width d. The gate and value
// paths U = silu(N Wu), V = silu(N Wv) are combined through a single squared
// ReLU attention matrix A = relu(Q K^T / sqrt(s))^2 / n built from a shared
// projection Z = silu(N Wz), where Q and K are per-dimension affine maps of
// Z. Output O = (U ⊙ A V) Wo. A pre-normalization over the feature dimension
// and a residual connection wrap the block; both can be toggled off for
// ablation runs. All gates use the sigmoid-weighted linear activation.

#include <cmath>
#include <cstddef>

#include "ccpose/error.hpp"
#include "ccpose/tensor.hpp"

namespace ccpose {

constexpr double kLayerNormEps = 1e-5;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double silu(double x) { return x * sigmoid(x); }
inline double silu_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

inline Tensor silu_map(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = silu(x[i]);
  return y;
}

struct GauParams {
  Tensor w_u;       // d x e
  Tensor w_v;       // d x e
  Tensor w_z;       // d x s
  Tensor q_scale;   // s
  Tensor q_offset;  // s
  Tensor k_scale;   // s
  Tensor k_offset;  // s
  Tensor w_o;       // e x d
  Tensor norm_gain;  // d
  Tensor norm_bias;  // d
  bool use_prenorm = true;
  bool use_residual = true;

  std::size_t token_dim() const { return w_u.dim(0); }
  std::size_t expand_dim() const { return w_u.dim(1); }
  std::size_t attn_dim() const { return w_z.dim(1); }

  template <typename Fn>
  void for_each_param(Fn&& fn) {
    fn("gau.w_u", w_u, true);
    fn("gau.w_v", w_v, true);
    fn("gau.w_z", w_z, true);
    fn("gau.q_scale", q_scale, false);
    fn("gau.q_offset", q_offset, false);
    fn("gau.k_scale", k_scale, false);
    fn("gau.k_offset", k_offset, false);
    fn("gau.w_o", w_o, true);
    fn("gau.norm_gain", norm_gain, false);
    fn("gau.norm_bias", norm_bias, false);
  }
};

// s = 128 matches the reference attention width; e defaults to 2d.
inline GauParams init_gau(std::size_t d, std::size_t e, std::size_t s, Rng& rng) {
  GauParams p;
  p.w_u = uniform_init({d, e}, d, rng);
  p.w_v = uniform_init({d, e}, d, rng);
  p.w_z = uniform_init({d, s}, d, rng);
  p.q_scale = Tensor({s});
  p.q_scale.fill(1.0);
  p.q_offset = Tensor({s});
  p.k_scale = Tensor({s});
  p.k_scale.fill(1.0);
  p.k_offset = Tensor({s});
  p.w_o = uniform_init({e, d}, e, rng);
  p.norm_gain = Tensor({d});
  p.norm_gain.fill(1.0);
  p.norm_bias = Tensor({d});
  return p;
}

inline GauParams zeros_like(const GauParams& p) {
  GauParams g;
  g.w_u = Tensor(p.w_u.shape());
  g.w_v = Tensor(p.w_v.shape());
  g.w_z = Tensor(p.w_z.shape());
  g.q_scale = Tensor(p.q_scale.shape());
  g.q_offset = Tensor(p.q_offset.shape());
  g.k_scale = Tensor(p.k_scale.shape());
  g.k_offset = Tensor(p.k_offset.shape());
  g.w_o = Tensor(p.w_o.shape());
  g.norm_gain = Tensor(p.norm_gain.shape());
  g.norm_bias = Tensor(p.norm_bias.shape());
  g.use_prenorm = p.use_prenorm;
  g.use_residual = p.use_residual;
  return g;
}

struct LayerNormCache {
  Tensor x;        // n x d input
  Tensor x_hat;    // normalized rows before gain/bias
  std::vector<double> inv_std;  // per row
};

inline Tensor layer_norm_forward(const Tensor& x, const Tensor& gain,
                                 const Tensor& bias, LayerNormCache& cache) {
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (gain.dim(0) != d || bias.dim(0) != d) {
    throw ShapeError("layer_norm: gain/bias " + gain.shape_str() +
                     " want feature width " + std::to_string(d));
  }
  cache.x = x;
  cache.x_hat = Tensor({n, d});
  cache.inv_std.assign(n, 0.0);
  Tensor y({n, d});
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x.row(r);
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = xr[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.inv_std[r] = inv;
    double* hr = cache.x_hat.row(r);
    double* yr = y.row(r);
    for (std::size_t j = 0; j < d; ++j) {
      hr[j] = (xr[j] - mean) * inv;
      yr[j] = gain[j] * hr[j] + bias[j];
    }
  }
  return y;
}

inline Tensor layer_norm_backward(const Tensor& dy, const Tensor& gain,
                                  const LayerNormCache& cache, Tensor& dgain,
                                  Tensor& dbias) {
  const std::size_t n = dy.dim(0), d = dy.dim(1);
  Tensor dx({n, d});
  for (std::size_t r = 0; r < n; ++r) {
    const double* dyr = dy.row(r);
    const double* hr = cache.x_hat.row(r);
    const double inv = cache.inv_std[r];
    double sum_dxhat = 0.0, sum_dxhat_h = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double dxh = dyr[j] * gain[j];
      sum_dxhat += dxh;
      sum_dxhat_h += dxh * hr[j];
      dgain[j] += dyr[j] * hr[j];
      dbias[j] += dyr[j];
    }
    const double inv_d = 1.0 / static_cast<double>(d);
    double* dxr = dx.row(r);
    for (std::size_t j = 0; j < d; ++j) {
      const double dxh = dyr[j] * gain[j];
      dxr[j] = inv * (dxh - sum_dxhat * inv_d - hr[j] * sum_dxhat_h * inv_d);
    }
  }
  return dx;
}

struct GauCache {
  Tensor x;   // block input
  Tensor n_;  // normalized input fed to the projections
  LayerNormCache ln;
  Tensor pre_u, pre_v, pre_z;  // pre-activation projections
  Tensor u, v, z;
  Tensor q, k;  // n x s
  Tensor scores;  // q k^T / sqrt(s), before relu^2
  Tensor attn;    // n x n
  Tensor t;       // attn * v
};

inline Tensor gau_forward(const Tensor& x, const GauParams& p, GauCache& cache) {
  if (x.rank() != 2 || x.dim(1) != p.token_dim()) {
    throw ShapeError("gau_forward: input " + x.shape_str() + " wants width " +
                     std::to_string(p.token_dim()));
  }
  const std::size_t n = x.dim(0), s = p.attn_dim();
  cache.x = x;
  cache.n_ = p.use_prenorm
                 ? layer_norm_forward(x, p.norm_gain, p.norm_bias, cache.ln)
                 : x;
  const Tensor& nin = cache.n_;

  cache.pre_u = matmul(nin, p.w_u);
  cache.pre_v = matmul(nin, p.w_v);
  cache.pre_z = matmul(nin, p.w_z);
  cache.u = silu_map(cache.pre_u);
  cache.v = silu_map(cache.pre_v);
  cache.z = silu_map(cache.pre_z);

  cache.q = Tensor({n, s});
  cache.k = Tensor({n, s});
  for (std::size_t r = 0; r < n; ++r) {
    const double* zr = cache.z.row(r);
    double* qr = cache.q.row(r);
    double* kr = cache.k.row(r);
    for (std::size_t j = 0; j < s; ++j) {
      qr[j] = p.q_scale[j] * zr[j] + p.q_offset[j];
      kr[j] = p.k_scale[j] * zr[j] + p.k_offset[j];
    }
  }

  cache.scores = matmul_nt(cache.q, cache.k);
  scale_inplace(cache.scores, 1.0 / std::sqrt(static_cast<double>(s)));
  cache.attn = relu_squared(cache.scores);
  scale_inplace(cache.attn, 1.0 / static_cast<double>(n));

  cache.t = matmul(cache.attn, cache.v);
  Tensor gated = hadamard(cache.u, cache.t);
  Tensor out = matmul(gated, p.w_o);
  if (p.use_residual) add_inplace(out, x);
  ensure_finite(out, "gau_forward");
  return out;
}

// Exact gradients of gau_forward. Accumulates into `grads` (zero it first
// when starting a new step) and returns d(loss)/d(input).
inline Tensor gau_backward(const Tensor& dout, const GauParams& p,
                           const GauCache& cache, GauParams& grads) {
  if (!dout.same_shape(cache.x)) {
    throw ContractError("gau_backward: upstream grad " + dout.shape_str() +
                        " does not match cached input " + cache.x.shape_str());
  }
  const std::size_t n = cache.x.dim(0), s = p.attn_dim();

  Tensor gated = hadamard(cache.u, cache.t);
  Tensor dgated = matmul_nt(dout, p.w_o);          // n x e
  add_inplace(grads.w_o, matmul_tn(gated, dout));  // e x d

  Tensor du = hadamard(dgated, cache.t);
  Tensor dt = hadamard(dgated, cache.u);

  Tensor dattn = matmul_nt(dt, cache.v);           // n x n
  Tensor dv = matmul_tn(cache.attn, dt);           // n x e

  // attn = relu(scores)^2 / n  =>  d/dscores = 2 relu(scores) / n
  Tensor dscores(cache.scores.shape());
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < dscores.size(); ++i) {
    const double r = cache.scores[i] > 0.0 ? cache.scores[i] : 0.0;
    dscores[i] = dattn[i] * 2.0 * r * inv_n;
  }
  const double inv_sqrt_s = 1.0 / std::sqrt(static_cast<double>(s));
  Tensor dq = matmul(dscores, cache.k);
  scale_inplace(dq, inv_sqrt_s);
  Tensor dk = matmul_tn(dscores, cache.q);
  scale_inplace(dk, inv_sqrt_s);

  Tensor dz({n, s});
  for (std::size_t r = 0; r < n; ++r) {
    const double* zr = cache.z.row(r);
    const double* dqr = dq.row(r);
    const double* dkr = dk.row(r);
    double* dzr = dz.row(r);
    for (std::size_t j = 0; j < s; ++j) {
      grads.q_scale[j] += dqr[j] * zr[j];
      grads.q_offset[j] += dqr[j];
      grads.k_scale[j] += dkr[j] * zr[j];
      grads.k_offset[j] += dkr[j];
      dzr[j] = dqr[j] * p.q_scale[j] + dkr[j] * p.k_scale[j];
    }
  }

  Tensor dpre_u(cache.pre_u.shape());
  for (std::size_t i = 0; i < dpre_u.size(); ++i)
    dpre_u[i] = du[i] * silu_grad(cache.pre_u[i]);
  Tensor dpre_v(cache.pre_v.shape());
  for (std::size_t i = 0; i < dpre_v.size(); ++i)
    dpre_v[i] = dv[i] * silu_grad(cache.pre_v[i]);
  Tensor dpre_z(cache.pre_z.shape());
  for (std::size_t i = 0; i < dpre_z.size(); ++i)
    dpre_z[i] = dz[i] * silu_grad(cache.pre_z[i]);

  add_inplace(grads.w_u, matmul_tn(cache.n_, dpre_u));
  add_inplace(grads.w_v, matmul_tn(cache.n_, dpre_v));
  add_inplace(grads.w_z, matmul_tn(cache.n_, dpre_z));

  Tensor dn = matmul_nt(dpre_u, p.w_u);
  add_inplace(dn, matmul_nt(dpre_v, p.w_v));
  add_inplace(dn, matmul_nt(dpre_z, p.w_z));

  Tensor dx = p.use_prenorm
                  ? layer_norm_backward(dn, p.norm_gain, cache.ln,
                                        grads.norm_gain, grads.norm_bias)
                  : dn;
  if (p.use_residual) add_inplace(dx, dout);
  return dx;
}

}  // namespace ccpose
