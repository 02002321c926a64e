#pragma once

// Per-primitive forward and backward: deformation -> covariance -> projection
// -> payload decoding. Templated on the compute scalar; parameters are read
// from double storage and cast on load so a float32 render only ever sees
// float32-rounded inputs.

#include "uags/detail/deformation_kernel.hpp"
#include "uags/detail/splat_math.hpp"
#include "uags/rasterizer.hpp"

#include <cmath>

namespace uags::detail {

template <class T>
struct PrimitiveForward {
  QueryTrace<T> trace;       // deformation at the render time
  QueryTrace<T> flow_trace;  // deformation at the flow target time
  V3<T> mu, mu_t, s_t, scale2;
  V4<T> q_raw, q_unit;
  T q_norm = T(1);
  M3<T> rot, cov3, cam_cov;
  V3<T> p;
  M23<T> jac;
  M2<T> cov2;
  T conic_a = 0, conic_b = 0, conic_c = 0;
  V2<T> mean;
  V3<T> dir;
  T dir_norm = T(1);
  V3<T> raw_color, color;
  T opacity = 0;
  bool flow_valid = false;
  V3<T> mu_t2, p2;
  V2<T> flow;
  T uncertainty = 0;
};

struct FrameContext {
  const Camera* cam = nullptr;
  const Camera* flow_cam = nullptr;  // null when no flow requested
};

// Returns false when the primitive is culled by the near plane.
template <class T>
bool primitive_forward(const GaussianModel& model, const DeformationField* field,
                       const FrameContext& frame, std::size_t k, PrimitiveForward<T>& f) {
  const Camera& cam = *frame.cam;
  for (int i = 0; i < 3; ++i) f.mu[i] = T(model.positions[3 * k + i]);
  V4<T> q;
  for (int i = 0; i < 4; ++i) q[i] = T(model.rotations[4 * k + i]);
  V3<T> s;
  for (int i = 0; i < 3; ++i) s[i] = T(model.log_scales[3 * k + i]);

  if (field) {
    query_forward<T>(*field, f.mu, T(cam.timestamp), f.trace);
    const auto& o = f.trace.out;
    f.mu_t = f.mu + V3<T>(o[0], o[1], o[2]);
    f.q_raw = q + V4<T>(o[3], o[4], o[5], o[6]);
    f.s_t = s + V3<T>(o[7], o[8], o[9]);
  } else {
    f.mu_t = f.mu;
    f.q_raw = q;
    f.s_t = s;
  }
  f.q_norm = f.q_raw.norm();
  if (!(f.q_norm >= T(1e-8))) {
    throw InvalidParameter("degenerate rotation after deformation for primitive " +
                           std::to_string(k));
  }
  f.q_unit = f.q_raw / f.q_norm;
  f.rot = rotation_from_unit_quaternion<T>(f.q_unit);
  for (int i = 0; i < 3; ++i) f.scale2[i] = std::exp(T(2) * f.s_t[i]);
  f.cov3 = f.rot * f.scale2.asDiagonal() * f.rot.transpose();

  const M3<T> wr = cam.rotation().cast<T>();
  const V3<T> wt = cam.translation().cast<T>();
  f.p = wr * f.mu_t + wt;
  if (!(f.p.z() > T(kNearPlane))) return false;

  const auto& in = cam.intrinsics;
  const T fx = T(in.fx), fy = T(in.fy), cx = T(in.cx), cy = T(in.cy);
  f.jac = projection_jacobian<T>(f.p, fx, fy);
  f.cam_cov = wr * f.cov3 * wr.transpose();
  f.cov2 = f.jac * f.cam_cov * f.jac.transpose();
  f.cov2(0, 0) += T(kCovarianceDilation);
  f.cov2(1, 1) += T(kCovarianceDilation);
  const T det = f.cov2(0, 0) * f.cov2(1, 1) - f.cov2(0, 1) * f.cov2(1, 0);
  if (!(det > T(0))) return false;
  f.conic_a = f.cov2(1, 1) / det;
  f.conic_b = -f.cov2(0, 1) / det;
  f.conic_c = f.cov2(0, 0) / det;
  f.mean = perspective<T>(f.p, fx, fy, cx, cy);

  const V3<T> center = cam.center().cast<T>();
  const V3<T> v = f.mu_t - center;
  f.dir_norm = v.norm();
  f.dir = v / f.dir_norm;
  const int degree = model.sh_degree();
  const double* feat = model.features.data() + static_cast<std::size_t>(model.feature_stride()) * k;
  for (int c = 0; c < 3; ++c) {
    f.raw_color[c] = sh_channel<T>(feat, degree, c, f.dir) + T(0.5);
    f.color[c] = f.raw_color[c] > T(0) ? f.raw_color[c] : T(0);
  }
  f.opacity = T(1) / (T(1) + std::exp(-T(model.opacity_logits[k])));
  f.uncertainty = T(model.uncertainties[k]);

  f.flow_valid = false;
  f.flow = V2<T>::Zero();
  if (frame.flow_cam) {
    const Camera& cam2 = *frame.flow_cam;
    if (field) {
      query_forward<T>(*field, f.mu, T(cam2.timestamp), f.flow_trace);
      const auto& o = f.flow_trace.out;
      f.mu_t2 = f.mu + V3<T>(o[0], o[1], o[2]);
    } else {
      f.mu_t2 = f.mu;
    }
    f.p2 = cam2.rotation().cast<T>() * f.mu_t2 + cam2.translation().cast<T>();
    if (f.p2.z() > T(kNearPlane)) {
      const auto& in2 = cam2.intrinsics;
      f.flow = perspective<T>(f.p2, T(in2.fx), T(in2.fy), T(in2.cx), T(in2.cy)) - f.mean;
      f.flow_valid = true;
    }
  }
  return true;
}

// Screen-space gradient of one splat, accumulated over pixels.
struct SplatGrad {
  double mean[2] = {0, 0};
  double conic[3] = {0, 0, 0};
  double opacity = 0;
  double color[3] = {0, 0, 0};
  double depth = 0;
  double flow[2] = {0, 0};

  void add(const SplatGrad& o) {
    for (int i = 0; i < 2; ++i) mean[i] += o.mean[i], flow[i] += o.flow[i];
    for (int i = 0; i < 3; ++i) conic[i] += o.conic[i], color[i] += o.color[i];
    opacity += o.opacity;
    depth += o.depth;
  }
};

// Chain rule from a splat's screen-space gradient back to the primitive's
// parameters (written into `grads` at index k) and the deformation field
// (accumulated into field_grad).
template <class T>
void primitive_backward(const GaussianModel& model, const DeformationField* field,
                        const FrameContext& frame, std::size_t k, const SplatGrad& g,
                        ModelGradients& grads, double* field_grad) {
  PrimitiveForward<T> f;
  if (!primitive_forward<T>(model, field, frame, k, f)) return;
  const Camera& cam = *frame.cam;
  const auto& in = cam.intrinsics;
  const T fx = T(in.fx), fy = T(in.fy);
  const M3<T> wr = cam.rotation().cast<T>();

  V3<T> d_mu = V3<T>::Zero();    // canonical position
  V3<T> d_mu_t = V3<T>::Zero();  // deformed position
  V3<T> d_p = V3<T>::Zero();
  V2<T> d_mean(T(g.mean[0]), T(g.mean[1]));

  // Opacity.
  grads.opacity_logits[k] += static_cast<double>(T(g.opacity) * f.opacity * (T(1) - f.opacity));

  // Color through SH and the view direction.
  {
    const int degree = model.sh_degree();
    const double* feat =
        model.features.data() + static_cast<std::size_t>(model.feature_stride()) * k;
    double* gfeat = grads.features.data() + static_cast<std::size_t>(model.feature_stride()) * k;
    const auto basis = sh_basis<T>(degree, f.dir);
    V3<T> d_dir = V3<T>::Zero();
    for (int c = 0; c < 3; ++c) {
      const T d_raw = f.raw_color[c] > T(0) ? T(g.color[c]) : T(0);
      if (d_raw == T(0)) continue;
      for (int i = 0; i < sh_coeff_count(degree); ++i) {
        gfeat[3 * i + c] += static_cast<double>(d_raw * basis[i]);
      }
      if (degree >= 1) {
        d_dir.x() += -T(kShC1) * T(feat[9 + c]) * d_raw;
        d_dir.y() += -T(kShC1) * T(feat[3 + c]) * d_raw;
        d_dir.z() += T(kShC1) * T(feat[6 + c]) * d_raw;
      }
    }
    if (degree >= 1) d_mu_t += normalize_backward<T>(f.dir, f.dir_norm, d_dir);
  }

  // Flow payload: pi'(mu^{t'}) - pi(mu^t).
  if (frame.flow_cam && f.flow_valid) {
    const V2<T> d_flow(T(g.flow[0]), T(g.flow[1]));
    if (d_flow[0] != T(0) || d_flow[1] != T(0)) {
      d_mean -= d_flow;
      const Camera& cam2 = *frame.flow_cam;
      const M23<T> j2 = projection_jacobian<T>(f.p2, T(cam2.intrinsics.fx), T(cam2.intrinsics.fy));
      const V3<T> d_p2 = j2.transpose() * d_flow;
      const V3<T> d_mu_t2 = cam2.rotation().cast<T>().transpose() * d_p2;
      d_mu += d_mu_t2;
      if (field) {
        std::array<T, kDeformationOutputs> d_out{};
        for (int i = 0; i < 3; ++i) d_out[i] = d_mu_t2[i];
        T d_time = 0;
        query_backward<T>(*field, f.flow_trace, d_out, field_grad, d_mu, d_time);
      }
    }
  }

  // Depth and mean.
  d_p.z() += T(g.depth);
  d_p += f.jac.transpose() * d_mean;

  // Conic -> 2D covariance -> camera covariance, Jacobian.
  M2<T> g_conic;
  g_conic << T(g.conic[0]), T(0.5) * T(g.conic[1]), T(0.5) * T(g.conic[1]), T(g.conic[2]);
  M2<T> conic;
  conic << f.conic_a, f.conic_b, f.conic_b, f.conic_c;
  const M2<T> g_cov2 = -conic * g_conic * conic;
  const M3<T> g_cam_cov = f.jac.transpose() * g_cov2 * f.jac;
  const M23<T> g_jac = T(2) * g_cov2 * f.jac * f.cam_cov;
  projection_jacobian_backward<T>(f.p, fx, fy, g_jac, d_p);
  const M3<T> g_cov3 = wr.transpose() * g_cam_cov * wr;

  d_mu_t += wr.transpose() * d_p;

  // Covariance -> rotation and log-scale.
  const M3<T> g_rot = T(2) * g_cov3 * f.rot * f.scale2.asDiagonal();
  const M3<T> rtgr = f.rot.transpose() * g_cov3 * f.rot;
  V3<T> d_s_t;
  for (int i = 0; i < 3; ++i) d_s_t[i] = rtgr(i, i) * T(2) * f.scale2[i];
  const V4<T> d_q_unit = rotation_backward<T>(f.q_unit, g_rot);
  const V4<T> d_q_raw = normalize_backward<T>(f.q_unit, f.q_norm, d_q_unit);

  d_mu += d_mu_t;
  if (field) {
    std::array<T, kDeformationOutputs> d_out{};
    for (int i = 0; i < 3; ++i) d_out[i] = d_mu_t[i];
    for (int i = 0; i < 4; ++i) d_out[3 + i] = d_q_raw[i];
    for (int i = 0; i < 3; ++i) d_out[7 + i] = d_s_t[i];
    T d_time = 0;
    query_backward<T>(*field, f.trace, d_out, field_grad, d_mu, d_time);
  }

  for (int i = 0; i < 3; ++i) {
    grads.positions[3 * k + i] += static_cast<double>(d_mu[i]);
    grads.log_scales[3 * k + i] += static_cast<double>(d_s_t[i]);
  }
  for (int i = 0; i < 4; ++i) grads.rotations[4 * k + i] += static_cast<double>(d_q_raw[i]);
}

}  // namespace uags::detail
