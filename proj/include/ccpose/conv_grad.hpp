#pragma once

// Analytic gradients for the convolution kernels in tensor.hpp. The strided
// backward scatters the upstream gradient onto the stride grid and reuses the
// dense backward, mirroring how conv2d_strided is defined in terms of
// conv2d_same.

#include <algorithm>
#include <cstddef>

#include "ccpose/tensor.hpp"

namespace ccpose {

struct ConvGrads {
  Tensor dw;
  Tensor dbias;
  Tensor dx;
};

inline ConvGrads conv2d_same_backward(const Tensor& x, const Tensor& w,
                                      const Tensor& dy) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t O = w.dim(0), K = w.dim(2);
  if (dy.rank() != 3 || dy.dim(0) != O || dy.dim(1) != H || dy.dim(2) != W) {
    throw ShapeError("conv2d_backward: upstream grad " + dy.shape_str() +
                     " wants [" + std::to_string(O) + "x" + std::to_string(H) +
                     "x" + std::to_string(W) + "]");
  }
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(K / 2);
  ConvGrads g{Tensor(w.shape()), Tensor({O}), Tensor(x.shape())};
  for (std::size_t o = 0; o < O; ++o) {
    const double* dyo = dy.data() + o * H * W;
    double acc_b = 0.0;
    for (std::size_t i = 0; i < H * W; ++i) acc_b += dyo[i];
    g.dbias[o] = acc_b;
    for (std::size_t c = 0; c < C; ++c) {
      const double* xc = x.data() + c * H * W;
      double* dxc = g.dx.data() + c * H * W;
      const double* wk = w.data() + (o * C + c) * K * K;
      double* dwk = g.dw.data() + (o * C + c) * K * K;
      for (std::size_t ki = 0; ki < K; ++ki) {
        for (std::size_t kj = 0; kj < K; ++kj) {
          const std::ptrdiff_t dyr = static_cast<std::ptrdiff_t>(ki) - pad;
          const std::ptrdiff_t dxr = static_cast<std::ptrdiff_t>(kj) - pad;
          const std::size_t h0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dyr));
          const std::size_t h1 = static_cast<std::size_t>(
              std::min<std::ptrdiff_t>(H, static_cast<std::ptrdiff_t>(H) - dyr));
          const std::size_t v0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dxr));
          const std::size_t v1 = static_cast<std::size_t>(
              std::min<std::ptrdiff_t>(W, static_cast<std::ptrdiff_t>(W) - dxr));
          const double wv = wk[ki * K + kj];
          double acc_w = 0.0;
          for (std::size_t h = h0; h < h1; ++h) {
            const double* dyrow = dyo + h * W;
            const double* xrow = xc + (h + dyr) * W + dxr;
            double* dxrow = dxc + (h + dyr) * W + dxr;
            for (std::size_t v = v0; v < v1; ++v) {
              acc_w += dyrow[v] * xrow[v];
              dxrow[v] += dyrow[v] * wv;
            }
          }
          dwk[ki * K + kj] += acc_w;
        }
      }
    }
  }
  return g;
}

inline ConvGrads conv2d_strided_backward(const Tensor& x, const Tensor& w,
                                         const Tensor& dy, std::size_t stride) {
  if (stride == 1) return conv2d_same_backward(x, w, dy);
  const std::size_t O = w.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t Ho = H / stride, Wo = W / stride;
  if (dy.rank() != 3 || dy.dim(0) != O || dy.dim(1) != Ho || dy.dim(2) != Wo) {
    throw ShapeError("conv2d_strided_backward: upstream grad " + dy.shape_str() +
                     " wants [" + std::to_string(O) + "x" + std::to_string(Ho) +
                     "x" + std::to_string(Wo) + "]");
  }
  Tensor dfull({O, H, W});
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t h = 0; h < Ho; ++h)
      for (std::size_t v = 0; v < Wo; ++v)
        dfull[(o * H + h * stride) * W + v * stride] = dy[(o * Ho + h) * Wo + v];
  return conv2d_same_backward(x, w, dfull);
}

}  // namespace ccpose
