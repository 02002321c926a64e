#pragma once

// Scalar-generic forward/backward kernels shared by the float32 production
// renderer and the float64 verification path.

#include "uags/scene_core.hpp"

#include <cmath>

namespace uags::detail {

template <class T> using V2 = Eigen::Matrix<T, 2, 1>;
template <class T> using V3 = Eigen::Matrix<T, 3, 1>;
template <class T> using V4 = Eigen::Matrix<T, 4, 1>;
template <class T> using M2 = Eigen::Matrix<T, 2, 2>;
template <class T> using M3 = Eigen::Matrix<T, 3, 3>;
template <class T> using M23 = Eigen::Matrix<T, 2, 3>;

// Truncated splat kernel: exp(-power) inside the 3-sigma ellipse, 0 outside.
// The hard cut makes per-tile culling by the 3-sigma bounding box exact.
inline constexpr double kKernelPowerCutoff = 4.5;

template <class T>
M3<T> rotation_from_unit_quaternion(const V4<T>& q) {
  const T w = q[0], x = q[1], y = q[2], z = q[3];
  M3<T> r;
  r << T(1) - T(2) * (y * y + z * z), T(2) * (x * y - w * z), T(2) * (x * z + w * y),
      T(2) * (x * y + w * z), T(1) - T(2) * (x * x + z * z), T(2) * (y * z - w * x),
      T(2) * (x * z - w * y), T(2) * (y * z + w * x), T(1) - T(2) * (x * x + y * y);
  return r;
}

// Gradient of <G, R(q)> w.r.t. the (already unit) quaternion components.
template <class T>
V4<T> rotation_backward(const V4<T>& q, const M3<T>& g) {
  const T w = q[0], x = q[1], y = q[2], z = q[3];
  V4<T> d;
  d[0] = T(2) * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) +
                 x * g(2, 1));
  d[1] = T(2) * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - T(2) * x * g(1, 1) -
                 w * g(1, 2) + z * g(2, 0) + w * g(2, 1) - T(2) * x * g(2, 2));
  d[2] = T(2) * (-T(2) * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) +
                 z * g(1, 2) - w * g(2, 0) + z * g(2, 1) - T(2) * y * g(2, 2));
  d[3] = T(2) * (-T(2) * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) -
                 T(2) * z * g(1, 1) + y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
  return d;
}

// Backward of q / |q| given the normalized value.
template <class T>
V4<T> normalize_backward(const V4<T>& unit, T norm, const V4<T>& d_unit) {
  return (d_unit - unit * unit.dot(d_unit)) / norm;
}

template <class T>
V3<T> normalize_backward(const V3<T>& unit, T norm, const V3<T>& d_unit) {
  return (d_unit - unit * unit.dot(d_unit)) / norm;
}

// Raw (pre-offset) SH value for one channel. Features are coefficient-major.
template <class T, class F>
T sh_channel(const F& f, int degree, int c, const V3<T>& dir) {
  T v = T(kShC0) * T(f[c]);
  if (degree >= 1) {
    v += -T(kShC1) * dir.y() * T(f[3 + c]) + T(kShC1) * dir.z() * T(f[6 + c]) -
         T(kShC1) * dir.x() * T(f[9 + c]);
  }
  return v;
}

template <class T>
std::array<T, 4> sh_basis(int degree, const V3<T>& dir) {
  std::array<T, 4> y{T(kShC0), T(0), T(0), T(0)};
  if (degree >= 1) {
    y[1] = -T(kShC1) * dir.y();
    y[2] = T(kShC1) * dir.z();
    y[3] = -T(kShC1) * dir.x();
  }
  return y;
}

// Jacobian of the perspective projection at camera-space point p.
template <class T>
M23<T> projection_jacobian(const V3<T>& p, T fx, T fy) {
  const T iz = T(1) / p.z();
  M23<T> j;
  j << fx * iz, T(0), -fx * p.x() * iz * iz, T(0), fy * iz, -fy * p.y() * iz * iz;
  return j;
}

// Accumulates d(loss)/dp for loss = <g, J(p)> into dp.
template <class T>
void projection_jacobian_backward(const V3<T>& p, T fx, T fy, const M23<T>& g, V3<T>& dp) {
  const T iz = T(1) / p.z();
  const T iz2 = iz * iz;
  const T iz3 = iz2 * iz;
  dp.x() += g(0, 2) * (-fx * iz2);
  dp.y() += g(1, 2) * (-fy * iz2);
  dp.z() += g(0, 0) * (-fx * iz2) + g(0, 2) * (T(2) * fx * p.x() * iz3) +
            g(1, 1) * (-fy * iz2) + g(1, 2) * (T(2) * fy * p.y() * iz3);
}

template <class T>
V2<T> perspective(const V3<T>& p, T fx, T fy, T cx, T cy) {
  return V2<T>(fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy);
}

}  // namespace uags::detail
