#pragma once

// Dense float64 tensors with explicit shapes, row-major layout, and the
// small set of kernels everything else is built from. No broadcasting;
// every operation states its exact shape contract and throws ShapeError
// with both shapes in the message when it is violated. Kernel outputs are
// checked for NaN/Inf before they are returned.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ccpose/error.hpp"

namespace ccpose {

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(count(shape_), 0.0) {
    validate_shape();
  }

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (data_.size() != count(shape_)) {
      throw ShapeError("tensor: shape " + shape_str() + " wants " +
                       std::to_string(count(shape_)) + " values, got " +
                       std::to_string(data_.size()));
    }
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Rank-2 accessors; the hot paths below index flat data directly.
  double& at2(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at2(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  double* row(std::size_t r) { return data_.data() + r * shape_[1]; }
  const double* row(std::size_t r) const { return data_.data() + r * shape_[1]; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
    os << "]";
    return os.str();
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  static std::size_t count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
  }

 private:
  void validate_shape() const {
    for (std::size_t d : shape_) {
      if (d == 0) throw ShapeError("tensor: zero dimension in shape " + shape_str());
    }
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

struct RngSeed {
  std::uint64_t value = 0;
};

// Seeded generator with hand-rolled value mappings so that a given seed
// produces bit-identical streams on every standard library implementation
// (uniform_real_distribution makes no such promise).
class Rng {
 public:
  explicit Rng(RngSeed seed) : engine_(seed.value) {}
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Box-Muller; kept state-free per call pair for replayability.
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Integer in [0, n).
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform01() * static_cast<double>(n)) % n;
  }

 private:
  std::mt19937_64 engine_;
};

inline void ensure_finite(const Tensor& t, const char* op) {
  const double* p = t.data();
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(p[i])) {
      throw NumericError(std::string(op) + ": non-finite value at flat index " +
                         std::to_string(i));
    }
  }
}

// Weight initialization: uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
inline Tensor uniform_init(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

// C = A(m x k) * B(k x n). Deterministic accumulation order (ikj).
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + a.shape_str() + " vs " +
                     b.shape_str());
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    for (std::size_t t = 0; t < k; ++t) {
      const double av = arow[t];
      if (av == 0.0) continue;
      const double* brow = b.row(t);
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  ensure_finite(c, "matmul");
  return c;
}

// C = A^T * B where A is (m x k), B is (m x n) -> (k x n). Avoids
// materializing transposes in the backward passes.
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
    throw ShapeError("matmul_tn: incompatible shapes " + a.shape_str() + " vs " +
                     b.shape_str());
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({k, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.row(i);
    const double* brow = b.row(i);
    for (std::size_t t = 0; t < k; ++t) {
      const double av = arow[t];
      if (av == 0.0) continue;
      double* crow = c.row(t);
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  ensure_finite(c, "matmul_tn");
  return c;
}

// C = A * B^T where A is (m x k), B is (n x k) -> (m x n).
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw ShapeError("matmul_nt: incompatible shapes " + a.shape_str() + " vs " +
                     b.shape_str());
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b.row(j);
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += arow[t] * brow[t];
      crow[j] = acc;
    }
  }
  ensure_finite(c, "matmul_nt");
  return c;
}

// Same-size 2-D convolution, cross-correlation convention (no kernel flip).
// x: C x H x W, w: O x C x k x k (k odd), bias: O -> O x H x W with zero
// padding of (k-1)/2 on each side.
inline Tensor conv2d_same(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (x.rank() != 3 || w.rank() != 4) {
    throw ShapeError("conv2d_same: want CxHxW input and OxCxkxk kernel, got " +
                     x.shape_str() + " and " + w.shape_str());
  }
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t O = w.dim(0), K = w.dim(2);
  if (w.dim(1) != C || w.dim(3) != K) {
    throw ShapeError("conv2d_same: kernel " + w.shape_str() +
                     " does not match input " + x.shape_str());
  }
  if (K % 2 == 0) {
    throw ParamError("conv2d_same: kernel size must be odd, got " + std::to_string(K));
  }
  if (bias.rank() != 1 || bias.dim(0) != O) {
    throw ShapeError("conv2d_same: bias " + bias.shape_str() + " wants [" +
                     std::to_string(O) + "]");
  }
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(K / 2);
  Tensor y({O, H, W});
  for (std::size_t o = 0; o < O; ++o) {
    double* yo = y.data() + o * H * W;
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t v = 0; v < W; ++v) yo[h * W + v] = bias[o];
    for (std::size_t c = 0; c < C; ++c) {
      const double* xc = x.data() + c * H * W;
      const double* wk = w.data() + (o * C + c) * K * K;
      for (std::size_t ki = 0; ki < K; ++ki) {
        for (std::size_t kj = 0; kj < K; ++kj) {
          const double wv = wk[ki * K + kj];
          if (wv == 0.0) continue;
          const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ki) - pad;
          const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kj) - pad;
          const std::size_t h0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dy));
          const std::size_t h1 = static_cast<std::size_t>(
              std::min<std::ptrdiff_t>(H, static_cast<std::ptrdiff_t>(H) - dy));
          const std::size_t v0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dx));
          const std::size_t v1 = static_cast<std::size_t>(
              std::min<std::ptrdiff_t>(W, static_cast<std::ptrdiff_t>(W) - dx));
          for (std::size_t h = h0; h < h1; ++h) {
            const double* xrow = xc + (h + dy) * W + dx;
            double* yrow = yo + h * W;
            for (std::size_t v = v0; v < v1; ++v) yrow[v] += wv * xrow[v];
          }
        }
      }
    }
  }
  ensure_finite(y, "conv2d_same");
  return y;
}

// Strided variant: output[o, h, v] == conv2d_same(x, w, bias)[o, h*stride, v*stride].
// Input spatial dims must be divisible by the stride.
inline Tensor conv2d_strided(const Tensor& x, const Tensor& w, const Tensor& bias,
                             std::size_t stride) {
  if (stride == 0) throw ParamError("conv2d_strided: stride must be positive");
  const std::size_t H = x.dim(1), W = x.dim(2);
  if (H % stride != 0 || W % stride != 0) {
    throw ShapeError("conv2d_strided: input " + x.shape_str() +
                     " not divisible by stride " + std::to_string(stride));
  }
  Tensor full = conv2d_same(x, w, bias);
  if (stride == 1) return full;
  const std::size_t O = full.dim(0), Ho = H / stride, Wo = W / stride;
  Tensor y({O, Ho, Wo});
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t h = 0; h < Ho; ++h)
      for (std::size_t v = 0; v < Wo; ++v)
        y[(o * Ho + h) * Wo + v] = full[(o * H + h * stride) * W + v * stride];
  return y;
}

// Tempered softmax over the last dimension: softmax(v / tau), computed with
// max subtraction. Every length-N slice of the output sums to 1.
inline Tensor softmax_t(const Tensor& logits, double tau) {
  if (tau <= 0.0) throw ParamError("softmax_t: tau must be positive, got " +
                                   std::to_string(tau));
  if (logits.rank() == 0) throw ShapeError("softmax_t: rank-0 input");
  const std::size_t n = logits.dim(logits.rank() - 1);
  const std::size_t rows = logits.size() / n;
  Tensor out(logits.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = logits.data() + r * n;
    double* o = out.data() + r * n;
    double mx = in[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      o[i] = std::exp((in[i] - mx) / tau);
      sum += o[i];
    }
    for (std::size_t i = 0; i < n; ++i) o[i] /= sum;
  }
  ensure_finite(out, "softmax_t");
  return out;
}

// Elementwise max(0, x)^2.
inline Tensor relu_squared(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i] > 0.0 ? x[i] : 0.0;
    y[i] = v * v;
  }
  ensure_finite(y, "relu_squared");
  return y;
}

inline void add_inplace(Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

inline void scale_inplace(Tensor& a, double s) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] *= s;
}

inline Tensor hadamard(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("hadamard: shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  }
  Tensor c(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] * b[i];
  return c;
}

inline double max_abs(const Tensor& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i]));
  return m;
}

}  // namespace ccpose
