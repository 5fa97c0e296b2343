#pragma once

// 2x3 affine transforms on image coordinates and bilinear warping of CxHxW
// tensors. Pixel (row r, col c) is treated as the point (x=c, y=r); samples
// outside the source are zero.

#include <cmath>
#include <cstddef>

#include "ccpose/error.hpp"
#include "ccpose/tensor.hpp"

namespace ccpose {

struct AffineTransform {
  // | a b tx |
  // | c d ty |
  double a = 1.0, b = 0.0, tx = 0.0;
  double c = 0.0, d = 1.0, ty = 0.0;

  static AffineTransform identity() { return {}; }

  std::pair<double, double> apply(double x, double y) const {
    return {a * x + b * y + tx, c * x + d * y + ty};
  }

  double det() const { return a * d - b * c; }

  AffineTransform inverse() const {
    const double dt = det();
    if (std::abs(dt) < 1e-12) {
      throw ParamError("affine: non-invertible transform (det ~ 0)");
    }
    AffineTransform inv;
    inv.a = d / dt;
    inv.b = -b / dt;
    inv.c = -c / dt;
    inv.d = a / dt;
    inv.tx = -(inv.a * tx + inv.b * ty);
    inv.ty = -(inv.c * tx + inv.d * ty);
    return inv;
  }

  // this ∘ other: applies `other` first.
  AffineTransform compose(const AffineTransform& o) const {
    AffineTransform r;
    r.a = a * o.a + b * o.c;
    r.b = a * o.b + b * o.d;
    r.c = c * o.a + d * o.c;
    r.d = c * o.b + d * o.d;
    r.tx = a * o.tx + b * o.ty + tx;
    r.ty = c * o.tx + d * o.ty + ty;
    return r;
  }
};

// Scale about `cx, cy` by `s`, rotate by `angle_rad`, then translate by
// (shift_x, shift_y).
inline AffineTransform make_center_transform(double cx, double cy, double s,
                                             double angle_rad, double shift_x,
                                             double shift_y) {
  const double ca = std::cos(angle_rad) * s;
  const double sa = std::sin(angle_rad) * s;
  AffineTransform t;
  t.a = ca;
  t.b = -sa;
  t.c = sa;
  t.d = ca;
  t.tx = cx - ca * cx + sa * cy + shift_x;
  t.ty = cy - sa * cx - ca * cy + shift_y;
  return t;
}

inline double bilinear_at(const double* plane, std::size_t h, std::size_t w,
                          double x, double y) {
  if (x <= -1.0 || y <= -1.0 || x >= static_cast<double>(w) ||
      y >= static_cast<double>(h)) {
    return 0.0;
  }
  const double fx = std::floor(x), fy = std::floor(y);
  const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
  const double ax = x - fx, ay = y - fy;
  auto at = [&](long yy, long xx) -> double {
    if (xx < 0 || yy < 0 || xx >= static_cast<long>(w) || yy >= static_cast<long>(h))
      return 0.0;
    return plane[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)];
  };
  const double v00 = at(y0, x0), v01 = at(y0, x0 + 1);
  const double v10 = at(y0 + 1, x0), v11 = at(y0 + 1, x0 + 1);
  return (1.0 - ay) * ((1.0 - ax) * v00 + ax * v01) +
         ay * ((1.0 - ax) * v10 + ax * v11);
}

// out(y, x) = src(T^-1 (x, y)) with bilinear sampling; T maps source
// coordinates to output coordinates.
inline Tensor warp_affine(const Tensor& src, const AffineTransform& t,
                          std::size_t out_h, std::size_t out_w) {
  if (src.rank() != 3) {
    throw ShapeError("warp_affine: want CxHxW, got " + src.shape_str());
  }
  const std::size_t C = src.dim(0), H = src.dim(1), W = src.dim(2);
  const AffineTransform inv = t.inverse();
  Tensor out({C, out_h, out_w});
  for (std::size_t c = 0; c < C; ++c) {
    const double* plane = src.data() + c * H * W;
    double* op = out.data() + c * out_h * out_w;
    for (std::size_t r = 0; r < out_h; ++r) {
      for (std::size_t q = 0; q < out_w; ++q) {
        auto [sx, sy] = inv.apply(static_cast<double>(q), static_cast<double>(r));
        op[r * out_w + q] = bilinear_at(plane, H, W, sx, sy);
      }
    }
  }
  return out;
}

}  // namespace ccpose
